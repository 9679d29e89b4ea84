#include "viba/metrics/masks.hpp"

#include <algorithm>
#include <cmath>

#include "viba/error.hpp"

namespace viba::metrics {
namespace {

void require_same_dims(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw invalid_argument("mask dims differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                           std::to_string(b.width) + "x" + std::to_string(b.height));
  }
}

void require_uniform(const std::vector<BinaryMask>& masks) {
  for (const BinaryMask& m : masks) require_same_dims(masks.front(), m);
}

}  // namespace

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

float quantile_threshold(const Plane& map, double q) {
  if (!(q > 0.0 && q < 1.0)) throw invalid_argument("binarization quantile must lie in (0, 1)");
  if (map.values.empty()) throw invalid_argument("cannot binarize an empty map");
  std::vector<float> sorted = map.values;
  const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(sorted.size() - 1)));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  return sorted[k];
}

BinaryMask binarize_map(const Plane& map, double q) {
  const float t = quantile_threshold(map, q);
  BinaryMask out(map.width, map.height);
  for (std::size_t i = 0; i < map.values.size(); ++i) out.bits[i] = map.values[i] >= t ? 1 : 0;
  return out;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a, b);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] && b.bits[i]) ? 1 : 0;
    uni += (a.bits[i] || b.bits[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double mean_consecutive_iou(const std::vector<BinaryMask>& masks) {
  if (masks.empty()) throw invalid_argument("IoU of an empty mask sequence");
  require_uniform(masks);
  if (masks.size() == 1) return 1.0;
  double s = 0.0;
  for (std::size_t i = 1; i < masks.size(); ++i) s += iou(masks[i - 1], masks[i]);
  return s / static_cast<double>(masks.size() - 1);
}

double mean_pairwise_iou(const std::vector<BinaryMask>& masks) {
  if (masks.empty()) throw invalid_argument("IoU of an empty mask sequence");
  require_uniform(masks);
  if (masks.size() == 1) return 1.0;
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (std::size_t j = i + 1; j < masks.size(); ++j, ++pairs) s += iou(masks[i], masks[j]);
  return s / static_cast<double>(pairs);
}

double tcs(const std::vector<BinaryMask>& masks) {
  if (masks.empty()) throw invalid_argument("TCS of an empty mask sequence");
  require_uniform(masks);
  const double area = static_cast<double>(masks.front().width * masks.front().height);
  double s = 0.0;
  for (const BinaryMask& m : masks) s += static_cast<double>(m.count()) / area;
  return s / static_cast<double>(masks.size());
}

std::optional<std::pair<double, double>> centroid(const BinaryMask& mask) {
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < mask.height; ++y)
    for (std::size_t x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        sx += static_cast<double>(x);
        sy += static_cast<double>(y);
        ++n;
      }
  if (n == 0) return std::nullopt;
  return std::make_pair(sx / static_cast<double>(n), sy / static_cast<double>(n));
}

double rpi(const std::vector<BinaryMask>& masks) {
  if (masks.size() < 2) throw invalid_argument("RPI needs at least 2 masks");
  require_uniform(masks);
  std::vector<std::optional<std::pair<double, double>>> c;
  for (const BinaryMask& m : masks) c.push_back(centroid(m));
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (!c[i] || !c[i - 1]) continue;
    s += std::hypot(c[i]->first - c[i - 1]->first, c[i]->second - c[i - 1]->second);
    ++pairs;
  }
  if (pairs == 0) return 0.0;
  const double diag = std::hypot(static_cast<double>(masks[0].width), static_cast<double>(masks[0].height));
  return s / static_cast<double>(pairs) / diag;
}

void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
  GrayImage img(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 255 : 0;
  write_pgm(path, img);
}

BinaryMask read_mask_pgm(const std::filesystem::path& path) {
  const GrayImage img = read_pgm(path);
  BinaryMask m(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) m.bits[i] = img.pixels[i] > 127 ? 1 : 0;
  return m;
}

}  // namespace viba::metrics
