#include <algorithm>
#include <cmath>

#include "viba/image.hpp"

namespace viba {
namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;
};

// Half-pixel-center source taps for each destination index.
std::vector<Tap> resize_taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> taps(dst);
  const double ratio = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t d = 0; d < dst; ++d) {
    double s = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, src - 1);
    taps[d] = Tap{i0, i1, s - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

float Plane::sample(double x, double y) const {
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, width - 1);
  const std::size_t y1 = std::min(y0 + 1, height - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
  const double bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

Plane to_luma(const RgbImage& image) {
  Plane out(image.width, image.height);
  for (std::size_t i = 0; i < image.width * image.height; ++i) {
    const double l = 0.299 * image.pixels[3 * i] + 0.587 * image.pixels[3 * i + 1] + 0.114 * image.pixels[3 * i + 2];
    out.values[i] = static_cast<float>(l / 255.0);
  }
  return out;
}

Plane resize_bilinear(const Plane& src, std::size_t width, std::size_t height) {
  if (src.width == width && src.height == height) return src;
  const auto tx = resize_taps(src.width, width);
  const auto ty = resize_taps(src.height, height);
  Plane out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double top = src.at(tx[x].i0, ty[y].i0) * (1.0 - tx[x].w1) + src.at(tx[x].i1, ty[y].i0) * tx[x].w1;
      const double bot = src.at(tx[x].i0, ty[y].i1) * (1.0 - tx[x].w1) + src.at(tx[x].i1, ty[y].i1) * tx[x].w1;
      out.at(x, y) = static_cast<float>(top * (1.0 - ty[y].w1) + bot * ty[y].w1);
    }
  }
  return out;
}

RgbImage resize_bilinear(const RgbImage& src, std::size_t width, std::size_t height) {
  if (src.width == width && src.height == height) return src;
  const auto tx = resize_taps(src.width, width);
  const auto ty = resize_taps(src.height, height);
  RgbImage out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = src.at(tx[x].i0, ty[y].i0, c) * (1.0 - tx[x].w1) + src.at(tx[x].i1, ty[y].i0, c) * tx[x].w1;
        const double bot = src.at(tx[x].i0, ty[y].i1, c) * (1.0 - tx[x].w1) + src.at(tx[x].i1, ty[y].i1, c) * tx[x].w1;
        const double v = top * (1.0 - ty[y].w1) + bot * ty[y].w1;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

}  // namespace viba
