#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "viba/image.hpp"

namespace viba::metrics {

struct BinaryMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  BinaryMask() = default;
  BinaryMask(std::size_t w, std::size_t h, bool fill = false) : width(w), height(h), bits(w * h, fill ? 1 : 0) {}

  bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
  void set(std::size_t x, std::size_t y, bool v) { bits[y * width + x] = v ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool operator==(const BinaryMask&) const = default;
};

// Threshold = sorted[floor(q * (n - 1))]; pixels >= threshold are true, so a
// constant map is all true.
float quantile_threshold(const Plane& map, double q);
BinaryMask binarize_map(const Plane& map, double q = 0.85);

// |a and b| / |a or b|; two empty masks give 1.
double iou(const BinaryMask& a, const BinaryMask& b);

// Mean IoU over consecutive frames (1 for a single mask).
double mean_consecutive_iou(const std::vector<BinaryMask>& masks);
// Mean IoU over all unordered pairs (1 for a single mask).
double mean_pairwise_iou(const std::vector<BinaryMask>& masks);

// Mean highlighted-area fraction: (1/N) sum_i |M_i| / (W H).
double tcs(const std::vector<BinaryMask>& masks);

// Centroid (x, y) of the true pixels; nullopt for an empty mask.
std::optional<std::pair<double, double>> centroid(const BinaryMask& mask);

// Mean centroid displacement between consecutive non-empty masks divided by
// sqrt(W^2 + H^2). Pairs with an empty mask are skipped; no usable pair gives 0.
double rpi(const std::vector<BinaryMask>& masks);

// PGM with 0 / 255; reading treats values > 127 as true.
void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_mask_pgm(const std::filesystem::path& path);

}  // namespace viba::metrics
