#pragma once

#include <cstdint>
#include <vector>

#include "viba/nn/model.hpp"

namespace viba::nn {

struct Example {
  Tensor input;  // C x H x W
  int label = 0;
};

using Dataset = std::vector<Example>;

// Defaults mirror the reference training setup: lr 1e-3, batch 16, patience 7.
struct TrainConfig {
  float learning_rate = 1e-3f;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 30;
  std::size_t patience = 7;
  std::uint64_t seed = 0;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  bool stopped_early = false;
};

// Adam with per-tensor moment buffers, parallel to a ParameterStore's trainable tensors.
class Adam {
 public:
  Adam(float lr, float beta1, float beta2, float eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Updates `param` in place; `slot` identifies the moment buffers.
  void step(std::size_t slot, Tensor& param, const Tensor& grad);
  void next_iteration() { ++t_; }

 private:
  float lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 1;
  std::vector<Tensor> m_, v_;
};

// Trains in place with early stopping on validation loss and restores the
// weights of the best validation epoch.
TrainResult train_model(Model& model, const Dataset& train, const Dataset& validation, const TrainConfig& config);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};
EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch_size = 32);

// Softmax probabilities [N, classes] in inference mode.
Tensor predict_proba(const Model& model, const Tensor& batch);

// Row-wise argmax.
std::vector<int> argmax_rows(const Tensor& probs);

}  // namespace viba::nn
