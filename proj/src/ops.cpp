#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>

#include "viba/autodiff.hpp"
#include "viba/error.hpp"
#include "viba/kernels.hpp"

namespace viba {
namespace {

using Index = std::ptrdiff_t;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                           shape_to_string(b.shape()));
  }
}

void require_rank(const char* op, const char* what, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw invalid_argument(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                           shape_to_string(t.shape()));
  }
}

void accumulate(Tensor& dst, const Tensor& src) {
  float* d = dst.raw();
  const float* s = src.raw();
  for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

kernels::ConvGeometry conv_geometry(const char* op, const Tensor& x, const Tensor& w, const Conv2dOptions& o) {
  require_rank(op, "input", x, 4);
  require_rank(op, "weight", w, 4);
  if (o.groups == 0 || o.stride == 0) throw invalid_argument(std::string(op) + ": stride and groups must be >= 1");
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel_h = w.dim(2);
  g.kernel_w = w.dim(3);
  g.stride_h = g.stride_w = o.stride;
  g.pad_h = g.pad_w = o.padding;
  g.groups = o.groups;
  const bool channels_ok = g.in_channels % g.groups == 0 && g.out_channels % g.groups == 0 &&
                           w.dim(1) * g.groups == g.in_channels;
  const bool fits = g.kernel_h <= g.in_h + 2 * g.pad_h && g.kernel_w <= g.in_w + 2 * g.pad_w;
  if (!channels_ok || !fits) {
    throw invalid_argument(std::string(op) + ": input " + shape_to_string(x.shape()) + " incompatible with weight " +
                           shape_to_string(w.shape()) + " (groups=" + std::to_string(g.groups) +
                           ", padding=" + std::to_string(o.padding) + ")");
  }
  return g;
}

}  // namespace

Var conv2d(Tape& tape, Var input, Var weight, Conv2dOptions options) {
  const Tensor& x = tape.value(input);
  const Tensor& w = tape.value(weight);
  const kernels::ConvGeometry g = conv_geometry("conv2d", x, w, options);
  Tensor out(Shape{g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, x.raw(), w.raw(), out.raw());
  return tape.record(std::move(out), {input, weight},
                     [&tape, input, weight, g](const Tensor& go, std::span<Tensor* const> grads) {
                       if (grads[0]) {
                         Tensor gi(tape.value(input).shape());
                         kernels::conv2d_backward_input(g, tape.value(weight).raw(), go.raw(), gi.raw());
                         accumulate(*grads[0], gi);
                       }
                       if (grads[1]) {
                         Tensor gw(tape.value(weight).shape());
                         kernels::conv2d_backward_weight(g, tape.value(input).raw(), go.raw(), gw.raw());
                         accumulate(*grads[1], gw);
                       }
                     });
}

Var separable_conv2d(Tape& tape, Var input, Var depthwise_weight, Var pointwise_weight) {
  const Tensor& x = tape.value(input);
  const Tensor& dw = tape.value(depthwise_weight);
  const Tensor& pw = tape.value(pointwise_weight);
  require_rank("separable_conv2d", "input", x, 4);
  require_rank("separable_conv2d", "depthwise weight", dw, 4);
  require_rank("separable_conv2d", "pointwise weight", pw, 4);
  if (dw.dim(0) != x.dim(1) || dw.dim(1) != 1 || dw.dim(2) != dw.dim(3) || dw.dim(2) % 2 == 0) {
    throw invalid_argument("separable_conv2d: depthwise groups must equal input channels; input " +
                           shape_to_string(x.shape()) + ", depthwise weight " + shape_to_string(dw.shape()));
  }
  if (pw.dim(1) != x.dim(1) || pw.dim(2) != 1 || pw.dim(3) != 1) {
    throw invalid_argument("separable_conv2d: pointwise weight " + shape_to_string(pw.shape()) +
                           " does not match input " + shape_to_string(x.shape()));
  }
  const Var depth = conv2d(tape, input, depthwise_weight, {1, dw.dim(2) / 2, x.dim(1)});
  return conv2d(tape, depth, pointwise_weight, {1, 0, 1});
}

Var batch_norm2d(Tape& tape, Var input, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var,
                 BatchNormOptions options, RunningStats* updated) {
  const Tensor& x = tape.value(input);
  require_rank("batch_norm2d", "input", x, 4);
  if (!(options.eps > 0.0f)) throw invalid_argument("batch_norm2d: eps must be > 0");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  for (const Tensor* p : {&tape.value(gamma), &tape.value(beta), &running_mean, &running_var}) {
    if (p->numel() != c) {
      throw invalid_argument("batch_norm2d: per-channel parameter of shape " + shape_to_string(p->shape()) +
                             " does not match " + std::to_string(c) + " channels");
    }
  }
  const std::size_t count = n * plane;
  if (options.training && count < 2) throw invalid_argument("batch_norm2d: training mode needs >1 value per channel");

  if (updated) *updated = RunningStats{running_mean, running_var};
  auto mean = std::make_shared<std::vector<double>>(c);
  auto inv_std = std::make_shared<std::vector<double>>(c);
  const float* g = tape.value(gamma).raw();
  const float* b = tape.value(beta).raw();
  Tensor out(x.shape());

#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < static_cast<Index>(c); ++ci) {
    double m, v;
    if (options.training) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const float* p = x.raw() + (i * c + ci) * plane;
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
      }
      m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const float* p = x.raw() + (i * c + ci) * plane;
        for (std::size_t j = 0; j < plane; ++j) ss += (p[j] - m) * (p[j] - m);
      }
      v = ss / static_cast<double>(count);
      const double unbiased = ss / static_cast<double>(count - 1);
      if (updated) {
        updated->mean[ci] = static_cast<float>((1.0 - options.momentum) * running_mean[ci] + options.momentum * m);
        updated->var[ci] = static_cast<float>((1.0 - options.momentum) * running_var[ci] + options.momentum * unbiased);
      }
    } else {
      m = running_mean[ci];
      v = running_var[ci];
    }
    const double is = 1.0 / std::sqrt(v + options.eps);
    (*mean)[ci] = m;
    (*inv_std)[ci] = is;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = x.raw() + (i * c + ci) * plane;
      float* q = out.raw() + (i * c + ci) * plane;
      for (std::size_t j = 0; j < plane; ++j) q[j] = static_cast<float>(g[ci] * ((p[j] - m) * is) + b[ci]);
    }
  }

  const bool training = options.training;
  return tape.record(
      std::move(out), {input, gamma, beta},
      [&tape, input, gamma, mean, inv_std, training, n, c, plane](const Tensor& go,
                                                                  std::span<Tensor* const> grads) {
        const Tensor& xv = tape.value(input);
        const float* gm = tape.value(gamma).raw();
        const double count = static_cast<double>(n * plane);
#pragma omp parallel for schedule(static)
        for (Index ci = 0; ci < static_cast<Index>(c); ++ci) {
          const double m = (*mean)[ci], is = (*inv_std)[ci];
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const float* p = xv.raw() + (i * c + ci) * plane;
            const float* d = go.raw() + (i * c + ci) * plane;
            for (std::size_t j = 0; j < plane; ++j) {
              sum_dy += d[j];
              sum_dy_xhat += d[j] * (p[j] - m) * is;
            }
          }
          if (grads[1]) (*grads[1])[ci] += static_cast<float>(sum_dy_xhat);
          if (grads[2]) (*grads[2])[ci] += static_cast<float>(sum_dy);
          if (!grads[0]) continue;
          for (std::size_t i = 0; i < n; ++i) {
            const float* p = xv.raw() + (i * c + ci) * plane;
            const float* d = go.raw() + (i * c + ci) * plane;
            float* gi = grads[0]->raw() + (i * c + ci) * plane;
            for (std::size_t j = 0; j < plane; ++j) {
              double dx;
              if (training) {
                const double xhat = (p[j] - m) * is;
                dx = gm[ci] * is * (d[j] - sum_dy / count - xhat * sum_dy_xhat / count);
              } else {
                dx = gm[ci] * is * d[j];
              }
              gi[j] += static_cast<float>(dx);
            }
          }
        }
      });
}

Var relu(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return tape.record(std::move(out), {input}, [&tape, input](const Tensor& go, std::span<Tensor* const> grads) {
    const Tensor& xv = tape.value(input);
    Tensor& gi = *grads[0];
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      if (xv[i] > 0.0f) gi[i] += go[i];
    }
  });
}

Var max_pool2d(Tape& tape, Var input, MaxPoolOptions options) {
  const Tensor& x = tape.value(input);
  require_rank("max_pool2d", "input", x, 4);
  if (options.kernel == 0 || options.stride == 0) throw invalid_argument("max_pool2d: kernel and stride must be >= 1");
  if (options.kernel > x.dim(2) + 2 * options.padding || options.kernel > x.dim(3) + 2 * options.padding) {
    throw invalid_argument("max_pool2d: kernel " + std::to_string(options.kernel) + " larger than padded input " +
                           shape_to_string(x.shape()));
  }
  if (options.padding >= options.kernel) throw invalid_argument("max_pool2d: padding must be smaller than kernel");
  kernels::PoolGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), options.kernel, options.stride, options.padding};
  Tensor out(Shape{g.batch, g.channels, g.out_h(), g.out_w()});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out.numel());
  kernels::max_pool2d_forward(g, x.raw(), out.raw(), argmax->data());
  return tape.record(std::move(out), {input}, [g, argmax](const Tensor& go, std::span<Tensor* const> grads) {
    Tensor gi(grads[0]->shape());
    kernels::max_pool2d_backward(g, argmax->data(), go.raw(), gi.raw());
    accumulate(*grads[0], gi);
  });
}

Var linear(Tape& tape, Var input, Var weight, Var bias) {
  const Tensor& x = tape.value(input);
  const Tensor& w = tape.value(weight);
  const Tensor& b = tape.value(bias);
  require_rank("linear", "input", x, 2);
  require_rank("linear", "weight", w, 2);
  if (x.dim(1) != w.dim(0) || b.numel() != w.dim(1)) {
    throw invalid_argument("linear: inner dimension mismatch, input " + shape_to_string(x.shape()) + ", weight " +
                           shape_to_string(w.shape()) + ", bias " + shape_to_string(b.shape()));
  }
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  Tensor out(Shape{rows, out_dim});
  kernels::linear_forward(rows, in, out_dim, x.raw(), w.raw(), b.raw(), out.raw());
  return tape.record(std::move(out), {input, weight, bias},
                     [&tape, input, weight, rows, in, out_dim](const Tensor& go, std::span<Tensor* const> grads) {
                       if (grads[0]) {
                         Tensor gi(Shape{rows, in});
                         kernels::linear_backward_input(rows, in, out_dim, tape.value(weight).raw(), go.raw(),
                                                        gi.raw());
                         accumulate(*grads[0], gi);
                       }
                       if (grads[1]) {
                         Tensor gw(Shape{in, out_dim});
                         kernels::linear_backward_weight(rows, in, out_dim, tape.value(input).raw(), go.raw(),
                                                         gw.raw());
                         accumulate(*grads[1], gw);
                       }
                       if (grads[2]) {
                         for (std::size_t k = 0; k < out_dim; ++k) {
                           double s = 0.0;
                           for (std::size_t r = 0; r < rows; ++r) s += go[r * out_dim + k];
                           (*grads[2])[k] += static_cast<float>(s);
                         }
                       }
                     });
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank("softmax", "logits", logits, 2);
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* z = logits.raw() + r * k;
    const double mx = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] - mx);
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = static_cast<float>(std::exp(z[j] - mx) / s);
  }
  return out;
}

Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const int> labels) {
  const Tensor& z = tape.value(logits);
  require_rank("softmax_cross_entropy", "logits", z, 2);
  const std::size_t rows = z.dim(0), k = z.dim(1);
  if (labels.size() != rows) {
    throw invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                           std::to_string(rows) + " rows");
  }
  auto probs = std::make_shared<std::vector<double>>(rows * k);
  std::vector<int> lab(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (lab[r] < 0 || static_cast<std::size_t>(lab[r]) >= k) {
      throw invalid_argument("softmax_cross_entropy: label " + std::to_string(lab[r]) + " out of range [0, " +
                             std::to_string(k) + ")");
    }
    const float* zr = z.raw() + r * k;
    const double mx = *std::max_element(zr, zr + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(zr[j] - mx);
    const double log_s = std::log(s);
    for (std::size_t j = 0; j < k; ++j) (*probs)[r * k + j] = std::exp(zr[j] - mx - log_s);
    total += -(zr[lab[r]] - mx - log_s);
  }
  Tensor loss = Tensor::scalar(static_cast<float>(total / static_cast<double>(rows)));
  return tape.record(std::move(loss), {logits},
                     [probs, lab, rows, k](const Tensor& go, std::span<Tensor* const> grads) {
                       const double scale = go[0] / static_cast<double>(rows);
                       Tensor& g = *grads[0];
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < k; ++j) {
                           const double onehot = static_cast<int>(j) == lab[r] ? 1.0 : 0.0;
                           g[r * k + j] += static_cast<float>(((*probs)[r * k + j] - onehot) * scale);
                         }
                       }
                     });
}

Var dropout(Tape& tape, Var input, float keep_prob, std::mt19937_64& rng) {
  if (!(keep_prob > 0.0f && keep_prob <= 1.0f)) throw invalid_argument("dropout: keep probability must be in (0, 1]");
  const Tensor& x = tape.value(input);
  auto mask = std::make_shared<std::vector<float>>(x.numel());
  std::bernoulli_distribution keep(keep_prob);
  const float s = 1.0f / keep_prob;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    (*mask)[i] = keep(rng) ? s : 0.0f;
    out[i] = x[i] * (*mask)[i];
  }
  return tape.record(std::move(out), {input}, [mask](const Tensor& go, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < go.numel(); ++i) (*grads[0])[i] += go[i] * (*mask)[i];
  });
}

Var reshape(Tape& tape, Var input, Shape shape) {
  Tensor out = tape.value(input).reshaped(std::move(shape));
  return tape.record(std::move(out), {input}, [](const Tensor& go, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < go.numel(); ++i) (*grads[0])[i] += go[i];
  });
}

Var flatten(Tape& tape, Var input) {
  const Shape& s = tape.shape(input);
  if (s.empty()) throw invalid_argument("flatten: scalar input");
  return reshape(tape, input, Shape{s[0], shape_numel(s) / std::max<std::size_t>(s[0], 1)});
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape("add", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] + y[i];
  return tape.record(std::move(out), {a, b}, [](const Tensor& go, std::span<Tensor* const> grads) {
    for (Tensor* g : grads)
      if (g) accumulate(*g, go);
  });
}

Var sub(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape("sub", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] - y[i];
  return tape.record(std::move(out), {a, b}, [](const Tensor& go, std::span<Tensor* const> grads) {
    if (grads[0]) accumulate(*grads[0], go);
    if (grads[1]) {
      for (std::size_t i = 0; i < go.numel(); ++i) (*grads[1])[i] -= go[i];
    }
  });
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape("mul", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * y[i];
  return tape.record(std::move(out), {a, b}, [&tape, a, b](const Tensor& go, std::span<Tensor* const> grads) {
    const Tensor& xv = tape.value(a);
    const Tensor& yv = tape.value(b);
    for (std::size_t i = 0; i < go.numel(); ++i) {
      if (grads[0]) (*grads[0])[i] += go[i] * yv[i];
      if (grads[1]) (*grads[1])[i] += go[i] * xv[i];
    }
  });
}

Var scale(Tape& tape, Var a, float factor) {
  const Tensor& x = tape.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * factor;
  return tape.record(std::move(out), {a}, [factor](const Tensor& go, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < go.numel(); ++i) (*grads[0])[i] += go[i] * factor;
  });
}

Var sigmoid(Tape& tape, Var a) {
  const Tensor& x = tape.value(a);
  auto y = std::make_shared<Tensor>(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) (*y)[i] = static_cast<float>(1.0 / (1.0 + std::exp(-double(x[i]))));
  Tensor out = *y;
  return tape.record(std::move(out), {a}, [y](const Tensor& go, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < go.numel(); ++i) (*grads[0])[i] += go[i] * (*y)[i] * (1.0f - (*y)[i]);
  });
}

Var sum(Tape& tape, Var a) {
  const Tensor& x = tape.value(a);
  double s = 0.0;
  for (float v : x.data()) s += v;
  return tape.record(Tensor::scalar(static_cast<float>(s)), {a},
                     [](const Tensor& go, std::span<Tensor* const> grads) {
                       for (float& g : grads[0]->data()) g += go[0];
                     });
}

Var mean(Tape& tape, Var a) {
  const Tensor& x = tape.value(a);
  if (x.numel() == 0) throw invalid_argument("mean of empty tensor");
  double s = 0.0;
  for (float v : x.data()) s += v;
  const double n = static_cast<double>(x.numel());
  return tape.record(Tensor::scalar(static_cast<float>(s / n)), {a},
                     [n](const Tensor& go, std::span<Tensor* const> grads) {
                       const float g = static_cast<float>(go[0] / n);
                       for (float& v : grads[0]->data()) v += g;
                     });
}

}  // namespace viba
