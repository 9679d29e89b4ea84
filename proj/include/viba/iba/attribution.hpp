#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "viba/iba/bottleneck.hpp"

namespace viba::iba {

// Relevance in bits per pixel at input resolution, plus the layer-resolution map.
struct CapacityMap {
  std::size_t frame_id = 0;
  Plane map;
  Plane raw;
  double total_bits = 0.0;  // sum of the raw map

  bool operator==(const CapacityMap&) const = default;
};

// Channel sum of the per-element capacity, upsampled bilinearly to width x height.
CapacityMap attribution_map(const Tensor& lambda, const Tensor& r, const ActivationStats& stats, std::size_t width,
                            std::size_t height);

struct FrameAttribution {
  CapacityMap map;
  int predicted = 0;
  float probability = 0.0f;
  // Mean softmax over noise samples with the optimized bottleneck in place.
  std::vector<float> injected_probabilities;
  std::vector<double> trace;
};

// Bottleneck attribution toward the model's own prediction. The noise stream is
// derived from (config.seed, frame_id).
FrameAttribution attribute_frame(const nn::Model& model, const Tensor& frame, const BottleneckConfig& config,
                                 const ActivationStats& stats, std::size_t frame_id = 0);

// attribute_frame over each input in order; frames run on up to `workers`
// threads with results independent of the worker count.
std::vector<FrameAttribution> attribute_sequence(const nn::Model& model, const std::vector<Tensor>& frames,
                                                 const std::vector<std::size_t>& frame_ids,
                                                 const BottleneckConfig& config, const ActivationStats& stats,
                                                 std::size_t workers = 1);

// One attribution per layer id, each using its own stats.
std::vector<std::pair<std::string, FrameAttribution>> layer_sweep(
    const nn::Model& model, const Tensor& frame, const std::vector<std::string>& layer_ids,
    const BottleneckConfig& config, const std::map<std::string, ActivationStats>& stats_per_layer,
    std::size_t frame_id = 0);

// Min-max normalized map through a blue-to-red colormap, alpha blended onto
// the frame. The map is resized to the frame when sizes differ.
RgbImage overlay_heatmap(const RgbImage& frame, const Plane& map, double alpha);
std::array<std::uint8_t, 3> colormap(double t);

// "VCAP" capacity files.
void write_capacity(const std::filesystem::path& path, const CapacityMap& map);
CapacityMap read_capacity(const std::filesystem::path& path);

// 8-bit min-max normalized export; min and max go to a `.meta` sidecar.
void export_capacity_pgm(const std::filesystem::path& path, const Plane& map);

}  // namespace viba::iba
