#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "viba/tensor.hpp"

namespace viba {

/// Handle to a tensor recorded on a Tape. Only meaningful for the tape that issued it.
struct Var {
  int id = -1;
  bool operator==(const Var&) const = default;
};

/// Gradients produced by one backward pass, keyed by tensor id.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<std::optional<Tensor>> grads) : grads_(std::move(grads)) {}

  bool has(Var v) const;
  const Tensor& of(Var v) const;
  const Tensor& operator[](Var v) const { return of(v); }

 private:
  std::vector<std::optional<Tensor>> grads_;
};

/// Records executed ops for reverse-mode differentiation. A tape is
/// single-use: backward may run once. Not thread-safe; confine each tape to
/// one thread.
class Tape {
 public:
  // grad_inputs[i] is null when input i needs no gradient; otherwise the
  // backward function accumulates (+=) into it.
  using BackwardFn = std::function<void(const Tensor& grad_output, std::span<Tensor* const> grad_inputs)>;

  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var variable(Tensor value) { return leaf(std::move(value), true); }
  Var leaf(Tensor value, bool requires_grad);

  // Records an op output. Throws if value is not finite.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Every leaf variable gets a gradient
  // (zeros when it does not influence the loss).
  Gradients backward(Var loss);

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<Var> inputs;
    BackwardFn backward;
  };
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable ops.

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

Var conv2d(Tape& tape, Var input, Var weight, Conv2dOptions options = {});

// Depthwise conv (one filter per channel, stride 1, "same" padding) followed
// by a 1x1 pointwise conv. depthwise_weight [C,1,k,k], pointwise_weight [O,C,1,1].
Var separable_conv2d(Tape& tape, Var input, Var depthwise_weight, Var pointwise_weight);

struct RunningStats {
  Tensor mean;
  Tensor var;
};

struct BatchNormOptions {
  float eps = 1e-5f;
  float momentum = 0.1f;
  bool training = false;
};

// Inference mode normalizes with the running statistics. Training mode
// normalizes with batch statistics and, when `updated` is given, writes the
// momentum-updated running statistics there (unbiased variance, as the usual
// frameworks do).
Var batch_norm2d(Tape& tape, Var input, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var,
                 BatchNormOptions options, RunningStats* updated = nullptr);

Var relu(Tape& tape, Var input);

struct MaxPoolOptions {
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t padding = 1;
};
Var max_pool2d(Tape& tape, Var input, MaxPoolOptions options = {});

// input [N,D], weight [D,K], bias [K].
Var linear(Tape& tape, Var input, Var weight, Var bias);

// Mean over rows of -log softmax(logits)[label].
Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const int> labels);

// Inverted dropout: keeps each element with probability keep_prob and scales by 1/keep_prob.
Var dropout(Tape& tape, Var input, float keep_prob, std::mt19937_64& rng);

Var reshape(Tape& tape, Var input, Shape shape);
Var flatten(Tape& tape, Var input);  // [N, ...] -> [N, prod(...)]

// Element-wise ops on equal shapes.
Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, float factor);
Var sigmoid(Tape& tape, Var a);

Var sum(Tape& tape, Var a);
Var mean(Tape& tape, Var a);

// Numerically stable softmax over the last axis of [N, K] logits (not recorded).
Tensor softmax_rows(const Tensor& logits);

}  // namespace viba
