#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "viba/image.hpp"
#include "viba/metrics/masks.hpp"

namespace viba::synth {

struct SynthConfig {
  std::size_t image_size = 64;
  std::size_t sequence_length = 2;  // frames per temporal sample
  std::size_t patch_min = 14;
  std::size_t patch_max = 22;
  double texture_period = 3.0;      // pixels per cycle of the fake-patch texture
  double texture_amplitude = 70.0;  // grey levels
  double pixel_noise = 3.0;         // uniform +- grey levels on spatial frames
  double motion_magnitude = 2.0;    // maximum jitter of a fake region, pixels/frame
  double fake_fraction = 0.5;
  std::size_t count = 200;
  std::uint64_t seed = 7;

  void validate(bool temporal) const;
};

enum Label : int { kReal = 0, kFake = 1 };

struct LabeledSample {
  std::string id;
  int label = kReal;
  std::vector<RgbImage> frames;
  metrics::BinaryMask mask;  // manipulated region; empty for real samples
  char region = 0;           // taxonomy code of the patch centre, 0 for real
  double drift_x = 0.0;      // global motion per frame (temporal samples)
  double drift_y = 0.0;
};

// Single "face" frames; fakes carry a high-frequency textured square patch.
std::vector<LabeledSample> gen_spatial_dataset(const SynthConfig& config);

// Sequences drifting uniformly; in fakes a square region jitters against the drift.
std::vector<LabeledSample> gen_temporal_dataset(const SynthConfig& config);

// Throws for real samples.
metrics::BinaryMask ground_truth_mask(const LabeledSample& sample);

// Taxonomy code at normalized coordinates (u, v) of the fixed face template
// (0 never occurs; outside the face is 'O').
char template_region(double u, double v);
GrayImage region_taxonomy(std::size_t width, std::size_t height);

// Writes <dir>/labels.csv (sample_id,label,region_code) and per sample
// <dir>/<id>/frame_NNNN.ppm, roi.csv, taxonomy.pgm and mask.pgm (fakes).
void write_dataset(const std::filesystem::path& dir, const std::vector<LabeledSample>& samples);

struct LabelRow {
  std::string sample_id;
  int label = 0;
  char region = 0;
};
std::vector<LabelRow> read_labels_csv(const std::filesystem::path& path);

std::string label_name(int label);

}  // namespace viba::synth
