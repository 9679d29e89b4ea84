#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "viba/app/config.hpp"
#include "viba/image.hpp"
#include "viba/tensor.hpp"

namespace viba::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitAcceptance = 1,
  kExitIo = 2,
  kExitConfig = 3,
  kExitData = 4,
};

// Settings shared by every subcommand.
struct Context {
  RunConfig config;
  std::filesystem::path out;
  std::size_t workers = 1;
  std::ostream* log = nullptr;  // progress messages; null silences them
};

// Runs `body`, mapping exceptions to exit codes (io 2, config and argument
// errors 3, data and numeric errors 4) and printing the message to `err`.
int run_guarded(const std::function<int()>& body, std::ostream& err);

// Creates `dir` (and parents), mapping failures to io errors.
void make_dir(const std::filesystem::path& dir);

// A dataset directory as written by `synth`, with every frame cropped to its
// ROI and resized to the model input size.
struct DatasetSample {
  std::string id;
  int label = 0;
  char region = 0;
  std::vector<RgbImage> frames;
};
std::vector<DatasetSample> load_dataset(const std::filesystem::path& dir, std::size_t input_size);

// Flow-colour image of the Farneback flow from `a` to `b`.
RgbImage flow_color_image(const RgbImage& a, const RgbImage& b, const flow::PyramidConfig& config);

// Network input for one sample: the first frame for toy-xception, the
// flow-colour image of the first two frames for toy-vgg.
Tensor sample_input(const std::string& model_kind, const std::vector<RgbImage>& frames,
                    const flow::PyramidConfig& config);

// Leading (1 - fraction) share of the samples trains, the rest validates.
std::size_t validation_split_point(std::size_t n, double validation_fraction);

int cmd_synth(const Context& ctx, const std::string& kind, std::optional<std::size_t> count);
int cmd_train(const Context& ctx, const std::filesystem::path& data_dir, const std::string& model_kind);
int cmd_stats(const Context& ctx, const std::filesystem::path& data_dir, const std::filesystem::path& weights,
              const std::string& model_kind, const std::string& layer);

struct AttributeOptions {
  std::filesystem::path frames_dir;
  std::filesystem::path weights;
  std::string model_kind;
  std::string layer;                 // empty: configured default for the model
  std::vector<std::string> sweep;    // non-empty: one subdirectory per layer
  std::filesystem::path stats;       // empty: estimate from the input frames
};
int cmd_attribute(const Context& ctx, const AttributeOptions& options);

int cmd_flow(const Context& ctx, const std::filesystem::path& frames_dir);

struct MetricsOptions {
  std::filesystem::path maps_dir;
  std::filesystem::path labels;       // labels.csv: per-video class
  std::filesystem::path annotations;  // video_id,annotator_id,region_code
  std::filesystem::path taxonomy_dir; // <dir>/<video>/taxonomy.pgm; template when absent
  std::filesystem::path masks_dir;    // <dir>/<video>/mask.pgm
};
int cmd_metrics(const Context& ctx, const MetricsOptions& options);

// Full synthetic pipeline with acceptance checks; see README for the layout.
int cmd_e2e(const Context& ctx);

}  // namespace viba::app
