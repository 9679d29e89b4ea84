#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "viba/image.hpp"

namespace viba::flow {

// Per-pixel displacement (dx, dy) in pixels/frame, row-major interleaved pairs.
struct FlowField {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> data;

  FlowField() = default;
  FlowField(std::size_t w, std::size_t h) : width(w), height(h), data(w * h * 2, 0.0f) {}

  float& dx(std::size_t x, std::size_t y) { return data[(y * width + x) * 2]; }
  float& dy(std::size_t x, std::size_t y) { return data[(y * width + x) * 2 + 1]; }
  float dx(std::size_t x, std::size_t y) const { return data[(y * width + x) * 2]; }
  float dy(std::size_t x, std::size_t y) const { return data[(y * width + x) * 2 + 1]; }
  bool operator==(const FlowField&) const = default;
};

struct PyramidConfig {
  double scale = 0.5;      // size ratio between consecutive levels
  std::size_t levels = 3;  // including the full-resolution level
  std::size_t window = 15;  // Gaussian averaging window for the displacement equations
  std::size_t iterations = 3;
  std::size_t poly_n = 5;  // polynomial expansion neighbourhood (odd)
  double poly_sigma = 1.1;

  void validate() const;
};

// Local quadratic model f(x + d) ~ d^T A d + b^T d + c at every pixel.
struct PolyExpansion {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> a11, a12, a22, b1, b2, c;
};

// Gaussian-weighted least-squares fit over a poly_n x poly_n window, border
// clamped. x runs along columns, y along rows.
PolyExpansion polynomial_expansion(const Plane& image, std::size_t poly_n, double poly_sigma);

// Dense coarse-to-fine Farneback flow such that next(p + flow(p)) ~ prev(p).
FlowField farneback_flow(const Plane& prev, const Plane& next, const PyramidConfig& config = {});

// HSV encoding: hue = direction, full saturation, value = magnitude over the
// frame maximum (black where the field is all zero).
RgbImage flow_to_color(const FlowField& flow);

// Backward warp: out(p) = image(p + flow(p)), bilinear, border clamp.
Plane warp_image(const Plane& image, const FlowField& flow);

// "VFLW", u32 width, u32 height, then little-endian f32 (dx, dy) pairs.
void write_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& path);

// Separable Gaussian blur with border clamp; radius defaults to ceil(3 sigma).
Plane gaussian_blur(const Plane& src, double sigma, std::size_t radius = 0);

}  // namespace viba::flow
