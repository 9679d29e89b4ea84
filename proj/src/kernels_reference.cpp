#include <limits>

#include "viba/kernels.hpp"

namespace viba::kernels::reference {

using Index = std::ptrdiff_t;

void conv2d_forward(const ConvGeometry& g, const float* input, const float* weight, float* output) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t cpg = g.in_per_group(), opg = g.out_per_group();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      const std::size_t grp = oc / opg;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double s = 0.0;
          for (std::size_t ci = 0; ci < cpg; ++ci)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const Index iy = static_cast<Index>(oy * g.stride_h + ky) - static_cast<Index>(g.pad_h);
                const Index ix = static_cast<Index>(ox * g.stride_w + kx) - static_cast<Index>(g.pad_w);
                if (iy < 0 || ix < 0 || iy >= static_cast<Index>(g.in_h) || ix >= static_cast<Index>(g.in_w))
                  continue;
                const std::size_t c = grp * cpg + ci;
                s += static_cast<double>(input[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix]) *
                     weight[((oc * cpg + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              }
          output[((n * g.out_channels + oc) * oh + oy) * ow + ox] = static_cast<float>(s);
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, const float* weight, const float* grad_output,
                           float* grad_input) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t cpg = g.in_per_group(), opg = g.out_per_group();
  for (std::size_t i = 0; i < g.batch * g.in_channels * g.in_h * g.in_w; ++i) grad_input[i] = 0.0f;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      const std::size_t grp = oc / opg;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const float go = grad_output[((n * g.out_channels + oc) * oh + oy) * ow + ox];
          for (std::size_t ci = 0; ci < cpg; ++ci)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const Index iy = static_cast<Index>(oy * g.stride_h + ky) - static_cast<Index>(g.pad_h);
                const Index ix = static_cast<Index>(ox * g.stride_w + kx) - static_cast<Index>(g.pad_w);
                if (iy < 0 || ix < 0 || iy >= static_cast<Index>(g.in_h) || ix >= static_cast<Index>(g.in_w))
                  continue;
                const std::size_t c = grp * cpg + ci;
                grad_input[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix] +=
                    go * weight[((oc * cpg + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              }
        }
    }
}

void conv2d_backward_weight(const ConvGeometry& g, const float* input, const float* grad_output,
                            float* grad_weight) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t cpg = g.in_per_group(), opg = g.out_per_group();
  for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
    const std::size_t grp = oc / opg;
    for (std::size_t ci = 0; ci < cpg; ++ci)
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          double s = 0.0;
          for (std::size_t n = 0; n < g.batch; ++n)
            for (std::size_t oy = 0; oy < oh; ++oy)
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const Index iy = static_cast<Index>(oy * g.stride_h + ky) - static_cast<Index>(g.pad_h);
                const Index ix = static_cast<Index>(ox * g.stride_w + kx) - static_cast<Index>(g.pad_w);
                if (iy < 0 || ix < 0 || iy >= static_cast<Index>(g.in_h) || ix >= static_cast<Index>(g.in_w))
                  continue;
                const std::size_t c = grp * cpg + ci;
                s += static_cast<double>(grad_output[((n * g.out_channels + oc) * oh + oy) * ow + ox]) *
                     input[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
          grad_weight[((oc * cpg + ci) * g.kernel_h + ky) * g.kernel_w + kx] = static_cast<float>(s);
        }
  }
}

void max_pool2d_forward(const PoolGeometry& g, const float* input, float* output, std::int32_t* argmax) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t pl = 0; pl < g.batch * g.channels; ++pl)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        std::int32_t best_idx = -1;
        for (std::size_t ky = 0; ky < g.kernel; ++ky)
          for (std::size_t kx = 0; kx < g.kernel; ++kx) {
            const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.pad);
            const Index ix = static_cast<Index>(ox * g.stride + kx) - static_cast<Index>(g.pad);
            if (iy < 0 || ix < 0 || iy >= static_cast<Index>(g.in_h) || ix >= static_cast<Index>(g.in_w)) continue;
            const float v = input[pl * g.in_h * g.in_w + iy * g.in_w + ix];
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = static_cast<std::int32_t>(iy * static_cast<Index>(g.in_w) + ix);
            }
          }
        output[(pl * oh + oy) * ow + ox] = best;
        argmax[(pl * oh + oy) * ow + ox] = best_idx;
      }
}

void linear_forward(std::size_t rows, std::size_t in, std::size_t out, const float* input, const float* weight,
                    const float* bias, float* output) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < out; ++k) {
      double s = bias ? bias[k] : 0.0;
      for (std::size_t d = 0; d < in; ++d) s += static_cast<double>(input[r * in + d]) * weight[d * out + k];
      output[r * out + k] = static_cast<float>(s);
    }
}

}  // namespace viba::kernels::reference
