#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "viba/autodiff.hpp"
#include "viba/image.hpp"
#include "viba/nn/model.hpp"
#include "viba/tensor.hpp"

namespace viba::iba {

// Per-channel statistics of the activation at one layer.
struct ActivationStats {
  std::string layer_id;
  std::vector<float> mean;
  std::vector<float> std;  // floored at the configured minimum
  std::size_t sample_count = 0;

  std::size_t channels() const { return mean.size(); }
};

// Mean/std per channel over every sample and spatial position of [N,C,H,W]
// activations (population variance), std floored at sigma_floor.
ActivationStats stats_from_activations(const std::vector<Tensor>& activations, float sigma_floor,
                                       std::string layer_id = {});

// Runs the model over calibration frames ([C,H,W] each) and collects stats at
// `layer_id`. Warns when fewer than 100 frames are given.
ActivationStats estimate_stats(const nn::Model& model, const std::string& layer_id,
                               const std::vector<Tensor>& frames, float sigma_floor = 0.1f);

// Text stats file: "layer = <id>", "samples = <n>", then a
// channel,mean,std table. Floats are written with 9 significant digits so
// they read back exactly.
void write_stats(const std::filesystem::path& path, const ActivationStats& stats);
ActivationStats read_stats(const std::filesystem::path& path);

// Unconstrained parameters alpha with lambda = sigmoid(alpha), shape (C,H,W).
struct LambdaField {
  Tensor alpha;

  static LambdaField constant(Shape shape, float alpha_value) { return LambdaField{Tensor(std::move(shape), alpha_value)}; }
  Tensor lambda() const;
};

struct BottleneckConfig {
  std::string layer;  // empty: model default
  double beta = 10.0;
  std::size_t steps = 10;
  double step_size = 1.0;
  std::size_t noise_samples = 10;
  std::uint64_t seed = 0;
  float sigma_floor = 0.1f;
  float initial_alpha = 5.0f;

  void validate() const;
};

// Draws `samples` copies of per-channel Gaussian noise shaped like `shape`
// (C,H,W), returning [samples,C,H,W].
Tensor draw_noise(const Shape& shape, const ActivationStats& stats, std::size_t samples, std::mt19937_64& rng);

// Z = lambda * R + (1 - lambda) * eps with lambda given directly (C,H,W) and
// R, eps shaped [N,C,H,W] or (C,H,W).
Tensor mix(const Tensor& r, const Tensor& lambda, const Tensor& eps);

// One noisy bottleneck sample of R (shape [1,C,H,W] or (C,H,W)).
Tensor sample_bottleneck(const Tensor& r, const LambdaField& field, const ActivationStats& stats,
                         std::mt19937_64& rng);

// Capacity in bits of one element: KL(N(lambda r + (1-lambda) mu, (1-lambda)^2 sigma^2) || N(mu, sigma^2)) / ln 2,
// with z = (R - mu) / sigma. lambda is clamped to <= 1 - 1e-6.
double capacity_bits(double lambda, double z);

// Per-element capacity (C,H,W) for R shaped [1,C,H,W] or (C,H,W).
Tensor capacity(const Tensor& lambda, const Tensor& r, const ActivationStats& stats);

// Differentiable pieces of the objective. `alpha` is (C,H,W); `r` one sample.
Var bottleneck_mix(Tape& tape, Var alpha, const Tensor& r, const Tensor& eps);
Var mean_capacity(Tape& tape, Var alpha, const Tensor& r, const ActivationStats& stats);

// Mean cross-entropy toward `target` over the noise samples in `eps` plus
// beta times the mean per-element capacity.
Var bottleneck_objective(Tape& tape, const nn::Model& model, std::size_t layer_index, Var alpha, const Tensor& r,
                         const Tensor& eps, int target, const ActivationStats& stats, double beta);

struct OptimizeResult {
  LambdaField field;
  Tensor activation;          // R at the injection layer, [1,C,H,W]
  std::vector<double> trace;  // objective before every step, then after the last one
};

// Adam on alpha for config.steps steps, fresh noise every step, model frozen.
OptimizeResult optimize_lambda(const nn::Model& model, const Tensor& input, int target_class,
                               const ActivationStats& stats, const BottleneckConfig& config, std::mt19937_64& rng);

// Logits [samples, K] when `lambda` replaces the activation at `layer_id`.
Tensor injected_logits(const nn::Model& model, const Tensor& input, const std::string& layer_id, const Tensor& lambda,
                       const ActivationStats& stats, std::size_t samples, std::mt19937_64& rng);

}  // namespace viba::iba
