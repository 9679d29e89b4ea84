#include <algorithm>
#include <cmath>
#include <numbers>

#include "viba/error.hpp"
#include "viba/flow/farneback.hpp"

namespace viba::flow {
namespace {

using Index = std::ptrdiff_t;

constexpr double kRegularization = 1e-6;

std::vector<double> gaussian_kernel(double sigma, std::size_t radius) {
  std::vector<double> k(2 * radius + 1);
  double s = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    s += k[i];
  }
  for (double& v : k) v /= s;
  return k;
}

// Separable blur of several equally sized double planes at once.
void blur_planes(std::vector<std::vector<double>*> planes, std::size_t width, std::size_t height, double sigma,
                 std::size_t radius) {
  const auto k = gaussian_kernel(sigma, radius);
  const Index r = static_cast<Index>(radius);
  const Index w = static_cast<Index>(width), h = static_cast<Index>(height);
  std::vector<double> tmp(width * height);
  for (auto* p : planes) {
    std::vector<double>& v = *p;
#pragma omp parallel for schedule(static)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        double s = 0.0;
        for (Index i = -r; i <= r; ++i) s += k[i + r] * v[y * w + std::clamp<Index>(x + i, 0, w - 1)];
        tmp[y * w + x] = s;
      }
#pragma omp parallel for schedule(static)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        double s = 0.0;
        for (Index i = -r; i <= r; ++i) s += k[i + r] * tmp[std::clamp<Index>(y + i, 0, h - 1) * w + x];
        v[y * w + x] = s;
      }
  }
}

double sample(const std::vector<float>& plane, std::size_t width, std::size_t height, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  const auto x0 = static_cast<std::size_t>(x), y0 = static_cast<std::size_t>(y);
  const std::size_t x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = plane[y0 * width + x0] * (1 - fx) + plane[y0 * width + x1] * fx;
  const double bot = plane[y1 * width + x0] * (1 - fx) + plane[y1 * width + x1] * fx;
  return top * (1 - fy) + bot * fy;
}

// One refinement pass at a single pyramid level.
void refine(const PolyExpansion& r0, const PolyExpansion& r1, FlowField& flow, const PyramidConfig& cfg) {
  const std::size_t w = flow.width, h = flow.height, n = w * h;
  std::vector<double> g11(n), g12(n), g22(n), h1(n), h2(n);
#pragma omp parallel for schedule(static)
  for (Index yi = 0; yi < static_cast<Index>(h); ++yi) {
    const auto y = static_cast<std::size_t>(yi);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const double dx = flow.dx(x, y), dy = flow.dy(x, y);
      const double px = static_cast<double>(x) + dx, py = static_cast<double>(y) + dy;
      const double a11 = 0.5 * (r0.a11[i] + sample(r1.a11, w, h, px, py));
      const double a12 = 0.5 * (r0.a12[i] + sample(r1.a12, w, h, px, py));
      const double a22 = 0.5 * (r0.a22[i] + sample(r1.a22, w, h, px, py));
      const double db1 = 0.5 * (r0.b1[i] - sample(r1.b1, w, h, px, py)) + a11 * dx + a12 * dy;
      const double db2 = 0.5 * (r0.b2[i] - sample(r1.b2, w, h, px, py)) + a12 * dx + a22 * dy;
      g11[i] = a11 * a11 + a12 * a12;
      g12[i] = a12 * (a11 + a22);
      g22[i] = a12 * a12 + a22 * a22;
      h1[i] = a11 * db1 + a12 * db2;
      h2[i] = a12 * db1 + a22 * db2;
    }
  }
  const std::size_t radius = cfg.window / 2;
  blur_planes({&g11, &g12, &g22, &h1, &h2}, w, h, 0.3 * static_cast<double>(radius), radius);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(n); ++i) {
    const double a = g11[i] + kRegularization, b = g12[i], d = g22[i] + kRegularization;
    const double det = a * d - b * b;
    flow.data[2 * i] = static_cast<float>((d * h1[i] - b * h2[i]) / det);
    flow.data[2 * i + 1] = static_cast<float>((a * h2[i] - b * h1[i]) / det);
  }
}

FlowField resize_flow(const FlowField& f, std::size_t width, std::size_t height, double factor) {
  Plane px(f.width, f.height), py(f.width, f.height);
  for (std::size_t i = 0; i < f.width * f.height; ++i) {
    px.values[i] = f.data[2 * i];
    py.values[i] = f.data[2 * i + 1];
  }
  const Plane rx = resize_bilinear(px, width, height);
  const Plane ry = resize_bilinear(py, width, height);
  FlowField out(width, height);
  for (std::size_t i = 0; i < width * height; ++i) {
    out.data[2 * i] = static_cast<float>(rx.values[i] * factor);
    out.data[2 * i + 1] = static_cast<float>(ry.values[i] * factor);
  }
  return out;
}

Plane pyramid_level(const Plane& src, double level_scale) {
  if (level_scale == 1.0) return src;
  const double sigma = (1.0 / level_scale - 1.0) * 0.5;
  const Plane blurred = gaussian_blur(src, sigma);
  const auto w = static_cast<std::size_t>(std::lround(static_cast<double>(src.width) * level_scale));
  const auto h = static_cast<std::size_t>(std::lround(static_cast<double>(src.height) * level_scale));
  return resize_bilinear(blurred, w, h);
}

}  // namespace

void PyramidConfig::validate() const {
  if (!(scale > 0.0 && scale < 1.0)) throw invalid_argument("pyramid scale must lie in (0, 1)");
  if (levels < 1) throw invalid_argument("pyramid needs at least one level");
  if (window < 3 || window % 2 == 0) throw invalid_argument("flow window must be odd and >= 3");
  if (iterations < 1) throw invalid_argument("flow iterations must be >= 1");
  if (poly_n < 3 || poly_n % 2 == 0) throw invalid_argument("poly_n must be odd and >= 3");
  if (!(poly_sigma > 0.0)) throw invalid_argument("poly_sigma must be > 0");
}

Plane gaussian_blur(const Plane& src, double sigma, std::size_t radius) {
  if (radius == 0) radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  if (radius == 0 || !(sigma > 0.0)) return src;
  std::vector<double> v(src.values.begin(), src.values.end());
  blur_planes({&v}, src.width, src.height, sigma, radius);
  Plane out(src.width, src.height);
  for (std::size_t i = 0; i < v.size(); ++i) out.values[i] = static_cast<float>(v[i]);
  return out;
}

FlowField farneback_flow(const Plane& prev, const Plane& next, const PyramidConfig& config) {
  config.validate();
  if (prev.width != next.width || prev.height != next.height) {
    throw invalid_argument("flow frames differ in size: " + std::to_string(prev.width) + "x" +
                           std::to_string(prev.height) + " vs " + std::to_string(next.width) + "x" +
                           std::to_string(next.height));
  }
  const double coarsest = std::pow(config.scale, static_cast<double>(config.levels - 1));
  const double min_side = static_cast<double>(std::min(prev.width, prev.height)) * coarsest;
  if (std::lround(min_side) < static_cast<long>(2 * config.poly_n)) {
    throw invalid_argument("too many pyramid levels (" + std::to_string(config.levels) + ") for a " +
                           std::to_string(prev.width) + "x" + std::to_string(prev.height) + " frame");
  }

  FlowField flow;
  for (std::size_t level = config.levels; level-- > 0;) {
    const double s = std::pow(config.scale, static_cast<double>(level));
    const Plane p = pyramid_level(prev, s);
    const Plane q = pyramid_level(next, s);
    if (flow.width == 0) {
      flow = FlowField(p.width, p.height);
    } else {
      flow = resize_flow(flow, p.width, p.height, 1.0 / config.scale);
    }
    const PolyExpansion r0 = polynomial_expansion(p, config.poly_n, config.poly_sigma);
    const PolyExpansion r1 = polynomial_expansion(q, config.poly_n, config.poly_sigma);
    for (std::size_t it = 0; it < config.iterations; ++it) refine(r0, r1, flow, config);
  }
  return flow;
}

RgbImage flow_to_color(const FlowField& flow) {
  RgbImage out(flow.width, flow.height);
  double max_mag = 0.0;
  for (std::size_t i = 0; i < flow.width * flow.height; ++i) {
    max_mag = std::max(max_mag, std::hypot(static_cast<double>(flow.data[2 * i]), static_cast<double>(flow.data[2 * i + 1])));
  }
  if (max_mag == 0.0) return out;
  for (std::size_t i = 0; i < flow.width * flow.height; ++i) {
    const double fx = flow.data[2 * i], fy = flow.data[2 * i + 1];
    double hue = std::atan2(fy, fx) * 180.0 / std::numbers::pi;
    if (hue < 0.0) hue += 360.0;
    if (hue >= 360.0) hue -= 360.0;
    const double v = std::hypot(fx, fy) / max_mag;
    const double hp = hue / 60.0;
    const double xc = v * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
      case 0: r = v, g = xc; break;
      case 1: r = xc, g = v; break;
      case 2: g = v, b = xc; break;
      case 3: g = xc, b = v; break;
      case 4: r = xc, b = v; break;
      default: r = v, b = xc; break;
    }
    out.pixels[3 * i] = static_cast<std::uint8_t>(std::lround(r * 255.0));
    out.pixels[3 * i + 1] = static_cast<std::uint8_t>(std::lround(g * 255.0));
    out.pixels[3 * i + 2] = static_cast<std::uint8_t>(std::lround(b * 255.0));
  }
  return out;
}

Plane warp_image(const Plane& image, const FlowField& flow) {
  if (image.width != flow.width || image.height != flow.height) {
    throw invalid_argument("warp_image: image and flow sizes differ");
  }
  Plane out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      out.at(x, y) = image.sample(static_cast<double>(x) + flow.dx(x, y), static_cast<double>(y) + flow.dy(x, y));
  return out;
}

}  // namespace viba::flow
