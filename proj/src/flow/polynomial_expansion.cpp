#include <algorithm>
#include <array>
#include <cmath>

#include "viba/error.hpp"
#include "viba/flow/farneback.hpp"

namespace viba::flow {
namespace {

using Index = std::ptrdiff_t;
using Mat6 = std::array<std::array<double, 6>, 6>;

// Gauss-Jordan inverse with partial pivoting; G is symmetric positive definite here.
Mat6 invert(Mat6 a) {
  Mat6 inv{};
  for (int i = 0; i < 6; ++i) inv[i][i] = 1.0;
  for (int col = 0; col < 6; ++col) {
    int piv = col;
    for (int r = col + 1; r < 6; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(inv[col], inv[piv]);
    const double d = a[col][col];
    for (int k = 0; k < 6; ++k) {
      a[col][k] /= d;
      inv[col][k] /= d;
    }
    for (int r = 0; r < 6; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (int k = 0; k < 6; ++k) {
        a[r][k] -= f * a[col][k];
        inv[r][k] -= f * inv[col][k];
      }
    }
  }
  return inv;
}

}  // namespace

PolyExpansion polynomial_expansion(const Plane& image, std::size_t poly_n, double poly_sigma) {
  if (poly_n < 3 || poly_n % 2 == 0) throw invalid_argument("poly_n must be odd and >= 3");
  if (!(poly_sigma > 0.0)) throw invalid_argument("poly_sigma must be > 0");
  if (image.width < poly_n || image.height < poly_n) {
    throw invalid_argument("image smaller than the polynomial expansion window");
  }
  const Index n = static_cast<Index>(poly_n / 2);
  const Index w = static_cast<Index>(image.width), h = static_cast<Index>(image.height);

  std::vector<double> g(2 * n + 1);
  for (Index i = -n; i <= n; ++i) g[i + n] = std::exp(-static_cast<double>(i * i) / (2.0 * poly_sigma * poly_sigma));

  // Normal-equation matrix over basis {1, x, y, x^2, y^2, xy}.
  Mat6 gram{};
  for (Index y = -n; y <= n; ++y)
    for (Index x = -n; x <= n; ++x) {
      const double wgt = g[x + n] * g[y + n];
      const double b[6] = {1.0, double(x), double(y), double(x * x), double(y * y), double(x * y)};
      for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) gram[r][c] += wgt * b[r] * b[c];
    }
  const Mat6 ginv = invert(gram);

  // Horizontal pass: h_p(x, y) = sum_i g(i) i^p f(x + i, y), p = 0, 1, 2.
  std::vector<double> h0(image.values.size()), h1(image.values.size()), h2(image.values.size());
#pragma omp parallel for schedule(static)
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      double s0 = 0, s1 = 0, s2 = 0;
      for (Index i = -n; i <= n; ++i) {
        const double v = image.values[y * w + std::clamp<Index>(x + i, 0, w - 1)] * g[i + n];
        s0 += v;
        s1 += v * i;
        s2 += v * i * i;
      }
      h0[y * w + x] = s0;
      h1[y * w + x] = s1;
      h2[y * w + x] = s2;
    }
  }

  PolyExpansion out;
  out.width = image.width;
  out.height = image.height;
  for (auto* v : {&out.a11, &out.a12, &out.a22, &out.b1, &out.b2, &out.c}) v->assign(image.values.size(), 0.0f);

#pragma omp parallel for schedule(static)
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      // Moments m = B^T W f in basis order {1, x, y, x^2, y^2, xy}.
      double m[6] = {0, 0, 0, 0, 0, 0};
      for (Index j = -n; j <= n; ++j) {
        const Index row = std::clamp<Index>(y + j, 0, h - 1) * w + x;
        const double gj = g[j + n];
        m[0] += gj * h0[row];
        m[1] += gj * h1[row];
        m[2] += gj * j * h0[row];
        m[3] += gj * h2[row];
        m[4] += gj * j * j * h0[row];
        m[5] += gj * j * h1[row];
      }
      double r[6];
      for (int a = 0; a < 6; ++a) {
        r[a] = 0.0;
        for (int b = 0; b < 6; ++b) r[a] += ginv[a][b] * m[b];
      }
      const std::size_t idx = static_cast<std::size_t>(y * w + x);
      out.c[idx] = static_cast<float>(r[0]);
      out.b1[idx] = static_cast<float>(r[1]);
      out.b2[idx] = static_cast<float>(r[2]);
      out.a11[idx] = static_cast<float>(r[3]);
      out.a22[idx] = static_cast<float>(r[4]);
      out.a12[idx] = static_cast<float>(r[5] * 0.5);
    }
  }
  return out;
}

}  // namespace viba::flow
