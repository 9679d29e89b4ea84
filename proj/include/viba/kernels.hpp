#pragma once

// Numeric kernels behind the differentiable ops. Each kernel has an OpenMP
// version (namespace kernels) and a plain serial loop version
// (namespace kernels::reference) kept for testing and benchmarking.
//
// Parallel kernels only split work over independent output elements, so
// results do not depend on the number of threads.

#include <cstddef>
#include <cstdint>

namespace viba::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t groups = 1;

  std::size_t out_h() const { return (in_h + 2 * pad_h - kernel_h) / stride_h + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad_w - kernel_w) / stride_w + 1; }
  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }
  // Length of one im2col column (dot-product length of the forward pass).
  std::size_t patch_size() const { return in_per_group() * kernel_h * kernel_w; }
};

struct PoolGeometry {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t pad = 1;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

// Dot products longer than this accumulate in double.
inline constexpr std::size_t kWideAccumulationThreshold = 4096;

// Weight layout: [out_channels, in_channels / groups, kernel_h, kernel_w].
void conv2d_forward(const ConvGeometry& g, const float* input, const float* weight, float* output);
// Overwrites grad_input.
void conv2d_backward_input(const ConvGeometry& g, const float* weight, const float* grad_output,
                           float* grad_input);
// Overwrites grad_weight.
void conv2d_backward_weight(const ConvGeometry& g, const float* input, const float* grad_output,
                            float* grad_weight);

// argmax receives, per output element, the flat index into its (n, c) input
// plane of the first (row-major) maximal element.
void max_pool2d_forward(const PoolGeometry& g, const float* input, float* output, std::int32_t* argmax);
// Overwrites grad_input.
void max_pool2d_backward(const PoolGeometry& g, const std::int32_t* argmax, const float* grad_output,
                         float* grad_input);

// input [rows, in], weight [in, out], bias [out] (may be null), output [rows, out].
void linear_forward(std::size_t rows, std::size_t in, std::size_t out, const float* input, const float* weight,
                    const float* bias, float* output);
void linear_backward_input(std::size_t rows, std::size_t in, std::size_t out, const float* weight,
                           const float* grad_output, float* grad_input);
void linear_backward_weight(std::size_t rows, std::size_t in, std::size_t out, const float* input,
                            const float* grad_output, float* grad_weight);

namespace reference {

void conv2d_forward(const ConvGeometry& g, const float* input, const float* weight, float* output);
void conv2d_backward_input(const ConvGeometry& g, const float* weight, const float* grad_output,
                           float* grad_input);
void conv2d_backward_weight(const ConvGeometry& g, const float* input, const float* grad_output,
                            float* grad_weight);
void max_pool2d_forward(const PoolGeometry& g, const float* input, float* output, std::int32_t* argmax);
void linear_forward(std::size_t rows, std::size_t in, std::size_t out, const float* input, const float* weight,
                    const float* bias, float* output);

}  // namespace reference
}  // namespace viba::kernels
