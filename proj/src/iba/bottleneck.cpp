#include "viba/iba/bottleneck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "viba/error.hpp"
#include "viba/log.hpp"
#include "viba/nn/architectures.hpp"
#include "viba/nn/train.hpp"
#include "viba/strings.hpp"

namespace viba::iba {
namespace {

constexpr double kMaxLambda = 1.0 - 1e-6;
constexpr double kMinOneMinusLambda = 1e-6;

// Activation without the batch axis: (C,H,W) from [1,C,H,W] or (C,H,W).
Shape sample_shape(const Tensor& r) {
  if (r.rank() == 4 && r.dim(0) == 1) return Shape{r.dim(1), r.dim(2), r.dim(3)};
  if (r.rank() == 3) return r.shape();
  throw invalid_argument("expected a single activation sample, got " + shape_to_string(r.shape()));
}

void check_stats(const ActivationStats& stats, std::size_t channels) {
  if (stats.channels() != channels) {
    throw invalid_argument("activation stats have " + std::to_string(stats.channels()) + " channels, layer has " +
                           std::to_string(channels));
  }
}

struct AlphaTerms {
  double lambda;
  double one_minus;
  bool clamped;
};

AlphaTerms alpha_terms(double a) {
  AlphaTerms t{1.0 / (1.0 + std::exp(-a)), 1.0 / (1.0 + std::exp(a)), false};
  if (t.one_minus < kMinOneMinusLambda) t = {kMaxLambda, kMinOneMinusLambda, true};
  return t;
}

double capacity_from_terms(const AlphaTerms& t, double z) {
  const double c = (-std::log(t.one_minus) + (t.one_minus * t.one_minus + t.lambda * t.lambda * z * z - 1.0) / 2.0) /
                   std::numbers::ln2;
  return std::max(0.0, c);
}

}  // namespace

ActivationStats stats_from_activations(const std::vector<Tensor>& activations, float sigma_floor,
                                       std::string layer_id) {
  if (activations.empty()) throw invalid_argument("no activations to estimate statistics from");
  if (!(sigma_floor > 0.0f)) throw invalid_argument("sigma floor must be > 0");
  const Shape& s0 = activations[0].shape();
  if (s0.size() != 4) throw invalid_argument("activations must be [N,C,H,W], got " + shape_to_string(s0));
  const std::size_t c = s0[1], plane = s0[2] * s0[3];
  std::vector<double> sum(c, 0.0), sq(c, 0.0);
  std::size_t samples = 0;
  for (const Tensor& t : activations) {
    if (t.rank() != 4 || t.dim(1) != c || t.dim(2) * t.dim(3) != plane) {
      throw invalid_argument("activation shape " + shape_to_string(t.shape()) + " differs from " + shape_to_string(s0));
    }
    samples += t.dim(0);
    for (std::size_t n = 0; n < t.dim(0); ++n)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float* p = t.raw() + (n * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum[ch] += p[i];
      }
  }
  const double count = static_cast<double>(samples * plane);
  ActivationStats out;
  out.layer_id = std::move(layer_id);
  out.sample_count = samples;
  out.mean.resize(c);
  out.std.resize(c);
  for (std::size_t ch = 0; ch < c; ++ch) sum[ch] /= count;
  for (const Tensor& t : activations)
    for (std::size_t n = 0; n < t.dim(0); ++n)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float* p = t.raw() + (n * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - sum[ch];
          sq[ch] += d * d;
        }
      }
  for (std::size_t ch = 0; ch < c; ++ch) {
    out.mean[ch] = static_cast<float>(sum[ch]);
    out.std[ch] = std::max(sigma_floor, static_cast<float>(std::sqrt(sq[ch] / count)));
  }
  return out;
}

ActivationStats estimate_stats(const nn::Model& model, const std::string& layer_id,
                               const std::vector<Tensor>& frames, float sigma_floor) {
  if (frames.empty()) throw invalid_argument("estimate_stats: empty calibration set");
  model.spec().index_of(layer_id);
  if (frames.size() < 100) {
    warn("estimate_stats: only " + std::to_string(frames.size()) + " calibration frames for layer " + layer_id +
         " (100 or more recommended)");
  }
  constexpr std::size_t kBatch = 16;
  const std::size_t batches = (frames.size() + kBatch - 1) / kBatch;
  std::vector<Tensor> acts(batches);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batches); ++b) {
    std::vector<const Tensor*> items;
    for (std::size_t i = b * kBatch; i < std::min(frames.size(), (b + 1) * kBatch); ++i) items.push_back(&frames[i]);
    acts[b] = model.forward_capture(nn::stack(items), {layer_id}).second.at(layer_id);
  }
  return stats_from_activations(acts, sigma_floor, layer_id);
}

Tensor LambdaField::lambda() const {
  Tensor out(alpha.shape());
  for (std::size_t i = 0; i < alpha.numel(); ++i) out[i] = static_cast<float>(1.0 / (1.0 + std::exp(-double(alpha[i]))));
  return out;
}

void BottleneckConfig::validate() const {
  if (!(beta > 0.0)) throw config_error("bottleneck beta must be > 0");
  if (steps < 1) throw config_error("bottleneck steps must be >= 1");
  if (noise_samples < 1) throw config_error("bottleneck noise samples must be >= 1");
  if (!(step_size > 0.0)) throw config_error("bottleneck step size must be > 0");
  if (!(sigma_floor > 0.0f)) throw config_error("sigma floor must be > 0");
}

Tensor draw_noise(const Shape& shape, const ActivationStats& stats, std::size_t samples, std::mt19937_64& rng) {
  if (shape.size() != 3) throw invalid_argument("noise shape must be (C,H,W), got " + shape_to_string(shape));
  check_stats(stats, shape[0]);
  const std::size_t plane = shape[1] * shape[2];
  Tensor out(Shape{samples, shape[0], shape[1], shape[2]});
  std::normal_distribution<double> normal(0.0, 1.0);
  float* p = out.raw();
  for (std::size_t s = 0; s < samples; ++s)
    for (std::size_t c = 0; c < shape[0]; ++c)
      for (std::size_t i = 0; i < plane; ++i) *p++ = static_cast<float>(stats.mean[c] + stats.std[c] * normal(rng));
  return out;
}

Tensor mix(const Tensor& r, const Tensor& lambda, const Tensor& eps) {
  const std::size_t n = lambda.numel();
  if (r.numel() != n || eps.numel() % n != 0 || eps.numel() == 0) {
    throw invalid_argument("bottleneck shapes disagree: R " + shape_to_string(r.shape()) + ", lambda " +
                           shape_to_string(lambda.shape()) + ", noise " + shape_to_string(eps.shape()));
  }
  Tensor out(eps.shape());
  for (std::size_t s = 0; s < eps.numel() / n; ++s)
    for (std::size_t i = 0; i < n; ++i) {
      const double l = lambda[i];
      out[s * n + i] = static_cast<float>(l * r[i] + (1.0 - l) * eps[s * n + i]);
    }
  return out;
}

Tensor sample_bottleneck(const Tensor& r, const LambdaField& field, const ActivationStats& stats,
                         std::mt19937_64& rng) {
  const Shape s = sample_shape(r);
  if (field.alpha.shape() != s) {
    throw invalid_argument("lambda field " + shape_to_string(field.alpha.shape()) + " does not match R " +
                           shape_to_string(r.shape()));
  }
  const Tensor eps = draw_noise(s, stats, 1, rng);
  return mix(r, field.lambda(), eps).reshaped(r.shape());
}

double capacity_bits(double lambda, double z) {
  if (!(lambda >= 0.0)) throw invalid_argument("lambda must be >= 0");
  lambda = std::min(lambda, kMaxLambda);
  const double one_minus = 1.0 - lambda;
  const double c = (-std::log1p(-lambda) + (one_minus * one_minus + lambda * lambda * z * z - 1.0) / 2.0) /
                   std::numbers::ln2;
  return std::max(0.0, c);
}

Tensor capacity(const Tensor& lambda, const Tensor& r, const ActivationStats& stats) {
  const Shape s = sample_shape(r);
  if (lambda.shape() != s) {
    throw invalid_argument("lambda " + shape_to_string(lambda.shape()) + " does not match R " + shape_to_string(r.shape()));
  }
  check_stats(stats, s[0]);
  const std::size_t plane = s[1] * s[2];
  Tensor out(s);
  for (std::size_t c = 0; c < s[0]; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = c * plane + i;
      const double z = (static_cast<double>(r[k]) - stats.mean[c]) / stats.std[c];
      out[k] = static_cast<float>(capacity_bits(lambda[k], z));
    }
  return out;
}

Var bottleneck_mix(Tape& tape, Var alpha, const Tensor& r, const Tensor& eps) {
  const Tensor& a = tape.value(alpha);
  const std::size_t n = a.numel();
  if (r.numel() != n || eps.rank() != 4 || eps.numel() % n != 0) {
    throw invalid_argument("bottleneck shapes disagree: R " + shape_to_string(r.shape()) + ", alpha " +
                           shape_to_string(a.shape()) + ", noise " + shape_to_string(eps.shape()));
  }
  auto lam = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) (*lam)[i] = 1.0 / (1.0 + std::exp(-double(a[i])));
  Tensor out(eps.shape());
  const std::size_t samples = eps.numel() / n;
  for (std::size_t s = 0; s < samples; ++s)
    for (std::size_t i = 0; i < n; ++i) {
      const double l = (*lam)[i];
      out[s * n + i] = static_cast<float>(l * r[i] + (1.0 - l) * eps[s * n + i]);
    }
  auto diff = std::make_shared<Tensor>(eps.shape());
  for (std::size_t s = 0; s < samples; ++s)
    for (std::size_t i = 0; i < n; ++i) (*diff)[s * n + i] = r[i] - eps[s * n + i];
  return tape.record(std::move(out), {alpha}, [lam, diff, n, samples](const Tensor& go, std::span<Tensor* const> g) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t s = 0; s < samples; ++s) acc += static_cast<double>(go[s * n + i]) * (*diff)[s * n + i];
      const double l = (*lam)[i];
      (*g[0])[i] += static_cast<float>(acc * l * (1.0 - l));
    }
  });
}

Var mean_capacity(Tape& tape, Var alpha, const Tensor& r, const ActivationStats& stats) {
  const Tensor& a = tape.value(alpha);
  const Shape s = sample_shape(r);
  if (a.shape() != s) {
    throw invalid_argument("alpha " + shape_to_string(a.shape()) + " does not match R " + shape_to_string(r.shape()));
  }
  check_stats(stats, s[0]);
  const std::size_t plane = s[1] * s[2], n = a.numel();
  auto dcap = std::make_shared<std::vector<double>>(n);
  double total = 0.0;
  for (std::size_t c = 0; c < s[0]; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = c * plane + i;
      const double z = (static_cast<double>(r[k]) - stats.mean[c]) / stats.std[c];
      const AlphaTerms t = alpha_terms(a[k]);
      const double cap = capacity_from_terms(t, z);
      total += cap;
      // d/dalpha of the unclamped expression; zero where lambda hit its clamp or
      // the capacity was clamped at 0.
      (*dcap)[k] = (t.clamped || cap == 0.0)
                       ? 0.0
                       : t.lambda * t.one_minus * (1.0 / t.one_minus - t.one_minus + t.lambda * z * z) / std::numbers::ln2;
    }
  const double inv_n = 1.0 / static_cast<double>(n);
  return tape.record(Tensor::scalar(static_cast<float>(total * inv_n)), {alpha},
                     [dcap, inv_n](const Tensor& go, std::span<Tensor* const> g) {
                       for (std::size_t k = 0; k < dcap->size(); ++k) {
                         (*g[0])[k] += static_cast<float>(go[0] * (*dcap)[k] * inv_n);
                       }
                     });
}

Var bottleneck_objective(Tape& tape, const nn::Model& model, std::size_t layer_index, Var alpha, const Tensor& r,
                         const Tensor& eps, int target, const ActivationStats& stats, double beta) {
  const Var z = bottleneck_mix(tape, alpha, r, eps);
  const nn::ForwardResult fwd = model.forward_range(tape, z, layer_index + 1, model.spec().layers.size());
  const std::vector<int> labels(eps.dim(0), target);
  const Var ce = softmax_cross_entropy(tape, fwd.output, labels);
  const Var cap = mean_capacity(tape, alpha, r, stats);
  return add(tape, ce, scale(tape, cap, static_cast<float>(beta)));
}

OptimizeResult optimize_lambda(const nn::Model& model, const Tensor& input, int target_class,
                               const ActivationStats& stats, const BottleneckConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::string layer = config.layer.empty() ? nn::default_injection_point(model.spec().name) : config.layer;
  const std::size_t layer_index = model.spec().index_of(layer);
  Shape batch_shape{1};
  batch_shape.insert(batch_shape.end(), input.shape().begin(), input.shape().end());
  const Tensor r = model.forward_capture(input.reshaped(batch_shape), {layer}).second.at(layer);
  const Shape s = sample_shape(r);
  check_stats(stats, s[0]);

  OptimizeResult result;
  result.field = LambdaField::constant(s, config.initial_alpha);
  result.activation = r;
  nn::Adam adam(static_cast<float>(config.step_size), 0.9f, 0.999f, 1e-8f);

  auto evaluate = [&](bool take_step, std::size_t step) {
    const Tensor eps = draw_noise(s, stats, config.noise_samples, rng);
    Tape tape;
    const Var alpha = tape.variable(result.field.alpha);
    Var obj;
    try {
      obj = bottleneck_objective(tape, model, layer_index, alpha, r, eps, target_class, stats, config.beta);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumeric) throw;
      const Tensor lam = result.field.lambda();
      const auto [lo, hi] = std::minmax_element(lam.data().begin(), lam.data().end());
      throw numeric_error("bottleneck objective not finite at step " + std::to_string(step) + " (lambda in [" +
                          format_double(*lo) + ", " + format_double(*hi) + "]): " + e.what());
    }
    result.trace.push_back(tape.value(obj).item());
    if (take_step) {
      const Gradients grads = tape.backward(obj);
      adam.step(0, result.field.alpha, grads[alpha]);
      adam.next_iteration();
    }
  };
  for (std::size_t step = 0; step < config.steps; ++step) evaluate(true, step);
  evaluate(false, config.steps);
  return result;
}

Tensor injected_logits(const nn::Model& model, const Tensor& input, const std::string& layer_id, const Tensor& lambda,
                       const ActivationStats& stats, std::size_t samples, std::mt19937_64& rng) {
  const std::size_t layer_index = model.spec().index_of(layer_id);
  Shape batch_shape{1};
  batch_shape.insert(batch_shape.end(), input.shape().begin(), input.shape().end());
  const Tensor r = model.forward_capture(input.reshaped(batch_shape), {layer_id}).second.at(layer_id);
  const Shape s = sample_shape(r);
  const Tensor eps = draw_noise(s, stats, samples, rng);
  Tape tape;
  const Var z = tape.constant(mix(r, lambda, eps));
  const nn::ForwardResult fwd = model.forward_range(tape, z, layer_index + 1, model.spec().layers.size());
  return tape.value(fwd.output);
}

}  // namespace viba::iba
