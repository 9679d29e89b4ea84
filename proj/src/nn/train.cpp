#include "viba/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "viba/error.hpp"
#include "viba/rng.hpp"

namespace viba::nn {

void TrainConfig::validate() const {
  if (batch_size < 1) throw config_error("batch size must be >= 1");
  if (max_epochs > 0 && patience >= max_epochs) throw config_error("patience must be smaller than max epochs");
  if (!(learning_rate > 0.0f)) throw config_error("learning rate must be > 0");
}

void Adam::step(std::size_t slot, Tensor& param, const Tensor& grad) {
  if (slot >= m_.size()) {
    m_.resize(slot + 1);
    v_.resize(slot + 1);
  }
  if (m_[slot].shape() != param.shape()) {
    m_[slot] = Tensor(param.shape());
    v_[slot] = Tensor(param.shape());
  }
  const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
  Tensor& m = m_[slot];
  Tensor& v = v_[slot];
  for (std::size_t i = 0; i < param.numel(); ++i) {
    m[i] = beta1_ * m[i] + (1.0f - beta1_) * grad[i];
    v[i] = beta2_ * v[i] + (1.0f - beta2_) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
  }
}

namespace {

Tensor gather_inputs(const Dataset& data, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  std::vector<const Tensor*> items;
  for (std::size_t i = begin; i < end; ++i) items.push_back(&data[idx[i]].input);
  return stack(items);
}

}  // namespace

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.empty()) throw invalid_argument("evaluate: empty dataset");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    const Tensor probs = predict_proba(model, gather_inputs(data, idx, b, e));
    const std::size_t k = probs.dim(1);
    for (std::size_t i = b; i < e; ++i) {
      const int label = data[i].label;
      loss += -std::log(std::max(static_cast<double>(probs[(i - b) * k + label]), 1e-30));
      const float* row = probs.raw() + (i - b) * k;
      if (std::max_element(row, row + k) - row == label) ++correct;
    }
  }
  return {loss / static_cast<double>(data.size()), static_cast<double>(correct) / static_cast<double>(data.size())};
}

TrainResult train_model(Model& model, const Dataset& train, const Dataset& validation, const TrainConfig& config) {
  config.validate();
  TrainResult result;
  if (config.max_epochs == 0) return result;
  if (train.empty()) throw invalid_argument("train_model: empty training set");
  if (validation.empty()) throw invalid_argument("train_model: empty validation set");

  Adam adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
  std::mt19937_64 dropout_rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  ParameterStore best = model.params();
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t e = std::min(order.size(), b + config.batch_size);
      if (e - b < 2) continue;  // batch-norm needs more than one sample
      std::vector<int> labels;
      for (std::size_t i = b; i < e; ++i) labels.push_back(train[order[i]].label);

      Tape tape;
      const Var in = tape.constant(gather_inputs(train, order, b, e));
      ForwardOptions opts{true, true, &dropout_rng};
      ForwardResult fr = model.forward(tape, in, opts);
      const Var loss = softmax_cross_entropy(tape, fr.output, labels);
      loss_sum += tape.value(loss).item() * static_cast<double>(e - b);
      seen += e - b;
      const Gradients grads = tape.backward(loss);

      std::size_t slot = 0;
      auto& layers = model.params().layers();
      for (std::size_t li = 0; li < layers.size(); ++li) {
        std::size_t vi = 0;
        for (auto& t : layers[li].tensors) {
          if (t.name == "running_mean" || t.name == "running_var") continue;
          adam.step(slot++, t.value, grads.of(fr.param_vars[li][vi++]));
        }
      }
      adam.next_iteration();
      model.apply_running_stats(fr.running_stats);
    }

    const EvalResult val = evaluate(model, validation);
    result.history.push_back({epoch, seen ? loss_sum / static_cast<double>(seen) : 0.0, val.loss, val.accuracy});
    if (val.loss < best_loss) {
      best_loss = val.loss;
      best = model.params();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  model.params() = std::move(best);
  return result;
}

Tensor predict_proba(const Model& model, const Tensor& batch) { return softmax_rows(model.logits(batch)); }

std::vector<int> argmax_rows(const Tensor& probs) {
  std::vector<int> out;
  const std::size_t k = probs.dim(1);
  for (std::size_t r = 0; r < probs.dim(0); ++r) {
    const float* row = probs.raw() + r * k;
    out.push_back(static_cast<int>(std::max_element(row, row + k) - row));
  }
  return out;
}

}  // namespace viba::nn
