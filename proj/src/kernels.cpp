#include "viba/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <vector>

namespace viba::kernels {
namespace {

using Index = std::ptrdiff_t;

// Unfolds one (sample, group) slice of the input into a [patch_size, out_h*out_w] matrix.
void im2col(const ConvGeometry& g, const float* input, std::size_t n, std::size_t group, float* col) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t cpg = g.in_per_group();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < cpg; ++ci) {
    const float* plane = input + ((n * g.in_channels) + group * cpg + ci) * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
        float* dst = col + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const Index iy = static_cast<Index>(oy * g.stride_h + ky) - static_cast<Index>(g.pad_h);
          float* drow = dst + oy * ow;
          if (iy < 0 || iy >= static_cast<Index>(g.in_h)) {
            std::fill(drow, drow + ow, 0.0f);
            continue;
          }
          const float* srow = plane + iy * g.in_w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const Index ix = static_cast<Index>(ox * g.stride_w + kx) - static_cast<Index>(g.pad_w);
            drow[ox] = (ix < 0 || ix >= static_cast<Index>(g.in_w)) ? 0.0f : srow[ix];
          }
        }
      }
    }
  }
}

// Adds a [patch_size, out_h*out_w] column matrix back into one (sample, group) input slice.
void col2im_add(const ConvGeometry& g, const float* col, std::size_t n, std::size_t group, float* input) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t cpg = g.in_per_group();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < cpg; ++ci) {
    float* plane = input + ((n * g.in_channels) + group * cpg + ci) * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
        const float* src = col + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const Index iy = static_cast<Index>(oy * g.stride_h + ky) - static_cast<Index>(g.pad_h);
          if (iy < 0 || iy >= static_cast<Index>(g.in_h)) continue;
          float* drow = plane + iy * g.in_w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const Index ix = static_cast<Index>(ox * g.stride_w + kx) - static_cast<Index>(g.pad_w);
            if (ix >= 0 && ix < static_cast<Index>(g.in_w)) drow[ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

template <typename Acc>
void conv_rows(const ConvGeometry& g, const float* weight, const float* col, std::size_t group, float* out_nc,
               std::vector<Acc>& acc) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t k_len = g.patch_size();
  for (std::size_t o = 0; o < g.out_per_group(); ++o) {
    const std::size_t oc = group * g.out_per_group() + o;
    const float* w = weight + oc * k_len;
    std::fill(acc.begin(), acc.end(), Acc(0));
    for (std::size_t k = 0; k < k_len; ++k) {
      const Acc wk = w[k];
      const float* c = col + k * plane;
      for (std::size_t p = 0; p < plane; ++p) acc[p] += wk * c[p];
    }
    float* dst = out_nc + oc * plane;
    for (std::size_t p = 0; p < plane; ++p) dst[p] = static_cast<float>(acc[p]);
  }
}

// Double-precision dot product over fixed lanes, so the reduction vectorizes
// and its order does not depend on the thread count.
double dot_double(const float* a, const float* b, std::size_t n) {
  constexpr std::size_t kLanes = 8;
  double lane[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t j = 0; j < kLanes; ++j) lane[j] += static_cast<double>(a[i + j]) * static_cast<double>(b[i + j]);
  double s = 0.0;
  for (std::size_t j = 0; j < kLanes; ++j) s += lane[j];
  for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const float* input, const float* weight, float* output) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t k_len = g.patch_size();
  const Index jobs = static_cast<Index>(g.batch * g.groups);
  const bool wide = k_len > kWideAccumulationThreshold;
#pragma omp parallel
  {
    std::vector<float> col(k_len * plane);
    std::vector<float> acc_f(wide ? 0 : plane);
    std::vector<double> acc_d(wide ? plane : 0);
#pragma omp for schedule(static)
    for (Index job = 0; job < jobs; ++job) {
      const std::size_t n = static_cast<std::size_t>(job) / g.groups;
      const std::size_t grp = static_cast<std::size_t>(job) % g.groups;
      im2col(g, input, n, grp, col.data());
      float* out_n = output + n * g.out_channels * plane;
      if (wide) {
        conv_rows(g, weight, col.data(), grp, out_n, acc_d);
      } else {
        conv_rows(g, weight, col.data(), grp, out_n, acc_f);
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const float* weight, const float* grad_output,
                           float* grad_input) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t k_len = g.patch_size();
  const Index jobs = static_cast<Index>(g.batch * g.groups);
  const std::size_t cpg = g.in_per_group();
  const std::size_t in_plane = g.in_h * g.in_w;
#pragma omp parallel
  {
    std::vector<float> dcol(k_len * plane);
#pragma omp for schedule(static)
    for (Index job = 0; job < jobs; ++job) {
      const std::size_t n = static_cast<std::size_t>(job) / g.groups;
      const std::size_t grp = static_cast<std::size_t>(job) % g.groups;
      std::fill(dcol.begin(), dcol.end(), 0.0f);
      for (std::size_t o = 0; o < g.out_per_group(); ++o) {
        const std::size_t oc = grp * g.out_per_group() + o;
        const float* w = weight + oc * k_len;
        const float* go = grad_output + (n * g.out_channels + oc) * plane;
        for (std::size_t k = 0; k < k_len; ++k) {
          const float wk = w[k];
          float* d = dcol.data() + k * plane;
          for (std::size_t p = 0; p < plane; ++p) d[p] += wk * go[p];
        }
      }
      float* gi = grad_input + (n * g.in_channels + grp * cpg) * in_plane;
      std::fill(gi, gi + cpg * in_plane, 0.0f);
      col2im_add(g, dcol.data(), n, grp, grad_input);
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const float* input, const float* grad_output,
                            float* grad_weight) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t k_len = g.patch_size();
  const Index jobs = static_cast<Index>(g.batch * g.groups);
  std::vector<float> cols(static_cast<std::size_t>(jobs) * k_len * plane);
#pragma omp parallel for schedule(static)
  for (Index job = 0; job < jobs; ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / g.groups;
    const std::size_t grp = static_cast<std::size_t>(job) % g.groups;
    im2col(g, input, n, grp, cols.data() + static_cast<std::size_t>(job) * k_len * plane);
  }
  const Index out_channels = static_cast<Index>(g.out_channels);
#pragma omp parallel
  {
    std::vector<double> acc(k_len);
#pragma omp for schedule(static)
    for (Index oc_i = 0; oc_i < out_channels; ++oc_i) {
      const std::size_t oc = static_cast<std::size_t>(oc_i);
      const std::size_t grp = oc / g.out_per_group();
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t n = 0; n < g.batch; ++n) {
        const float* go = grad_output + (n * g.out_channels + oc) * plane;
        const float* col = cols.data() + (n * g.groups + grp) * k_len * plane;
        for (std::size_t k = 0; k < k_len; ++k) acc[k] += dot_double(go, col + k * plane, plane);
      }
      float* gw = grad_weight + oc * k_len;
      for (std::size_t k = 0; k < k_len; ++k) gw[k] = static_cast<float>(acc[k]);
    }
  }
}

void max_pool2d_forward(const PoolGeometry& g, const float* input, float* output, std::int32_t* argmax) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const Index planes = static_cast<Index>(g.batch * g.channels);
#pragma omp parallel for schedule(static)
  for (Index pl = 0; pl < planes; ++pl) {
    const float* in = input + static_cast<std::size_t>(pl) * g.in_h * g.in_w;
    float* out = output + static_cast<std::size_t>(pl) * oh * ow;
    std::int32_t* arg = argmax + static_cast<std::size_t>(pl) * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        std::int32_t best_idx = -1;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
          const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.pad);
          if (iy < 0 || iy >= static_cast<Index>(g.in_h)) continue;
          for (std::size_t kx = 0; kx < g.kernel; ++kx) {
            const Index ix = static_cast<Index>(ox * g.stride + kx) - static_cast<Index>(g.pad);
            if (ix < 0 || ix >= static_cast<Index>(g.in_w)) continue;
            const float v = in[iy * static_cast<Index>(g.in_w) + ix];
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = static_cast<std::int32_t>(iy * static_cast<Index>(g.in_w) + ix);
            }
          }
        }
        out[oy * ow + ox] = best;
        arg[oy * ow + ox] = best_idx;
      }
    }
  }
}

void max_pool2d_backward(const PoolGeometry& g, const std::int32_t* argmax, const float* grad_output,
                         float* grad_input) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const Index planes = static_cast<Index>(g.batch * g.channels);
#pragma omp parallel for schedule(static)
  for (Index pl = 0; pl < planes; ++pl) {
    float* gi = grad_input + static_cast<std::size_t>(pl) * g.in_h * g.in_w;
    std::fill(gi, gi + g.in_h * g.in_w, 0.0f);
    const float* go = grad_output + static_cast<std::size_t>(pl) * oh * ow;
    const std::int32_t* arg = argmax + static_cast<std::size_t>(pl) * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) gi[arg[i]] += go[i];
  }
}

void linear_forward(std::size_t rows, std::size_t in, std::size_t out, const float* input, const float* weight,
                    const float* bias, float* output) {
  const bool wide = in > kWideAccumulationThreshold;
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const float* x = input + static_cast<std::size_t>(r) * in;
    float* y = output + static_cast<std::size_t>(r) * out;
    if (wide) {
      std::vector<double> acc(out, 0.0);
      for (std::size_t d = 0; d < in; ++d) {
        const double xd = x[d];
        const float* w = weight + d * out;
        for (std::size_t k = 0; k < out; ++k) acc[k] += xd * w[k];
      }
      for (std::size_t k = 0; k < out; ++k) y[k] = static_cast<float>(acc[k] + (bias ? bias[k] : 0.0f));
    } else {
      for (std::size_t k = 0; k < out; ++k) y[k] = 0.0f;
      for (std::size_t d = 0; d < in; ++d) {
        const float xd = x[d];
        const float* w = weight + d * out;
        for (std::size_t k = 0; k < out; ++k) y[k] += xd * w[k];
      }
      if (bias) {
        for (std::size_t k = 0; k < out; ++k) y[k] += bias[k];
      }
    }
  }
}

void linear_backward_input(std::size_t rows, std::size_t in, std::size_t out, const float* weight,
                           const float* grad_output, float* grad_input) {
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const float* go = grad_output + static_cast<std::size_t>(r) * out;
    float* gi = grad_input + static_cast<std::size_t>(r) * in;
    for (std::size_t d = 0; d < in; ++d) {
      const float* w = weight + d * out;
      double s = 0.0;
      for (std::size_t k = 0; k < out; ++k) s += static_cast<double>(w[k]) * go[k];
      gi[d] = static_cast<float>(s);
    }
  }
}

void linear_backward_weight(std::size_t rows, std::size_t in, std::size_t out, const float* input,
                            const float* grad_output, float* grad_weight) {
#pragma omp parallel for schedule(static)
  for (Index d = 0; d < static_cast<Index>(in); ++d) {
    float* gw = grad_weight + static_cast<std::size_t>(d) * out;
    for (std::size_t k = 0; k < out; ++k) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        s += static_cast<double>(input[r * in + static_cast<std::size_t>(d)]) * grad_output[r * out + k];
      }
      gw[k] = static_cast<float>(s);
    }
  }
}

}  // namespace viba::kernels
