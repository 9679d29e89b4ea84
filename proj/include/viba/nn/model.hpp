#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "viba/autodiff.hpp"
#include "viba/tensor.hpp"

namespace viba::nn {

struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

// Depthwise k x k (same padding) followed by pointwise 1x1, no bias.
struct SeparableConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
};

struct BatchNormLayer {
  std::size_t channels = 0;
  float eps = 1e-5f;
  float momentum = 0.1f;
};

struct ReluLayer {};

struct MaxPoolLayer {
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t padding = 1;
};

struct FlattenLayer {};

// Identity at inference, inverted-dropout masking while training.
struct DropoutLayer {
  float keep_prob = 0.5f;
};

struct LinearLayer {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

using LayerKind = std::variant<ConvLayer, SeparableConvLayer, BatchNormLayer, ReluLayer, MaxPoolLayer, FlattenLayer,
                               DropoutLayer, LinearLayer>;

struct LayerSpec {
  std::string id;
  LayerKind kind;
};

std::string kind_name(const LayerKind& kind);

struct ModelSpec {
  std::string name;
  Shape input_shape;  // C, H, W
  std::vector<LayerSpec> layers;
  // Layer ids whose outputs may host a bottleneck, shallow to deep.
  std::vector<std::string> injection_points;

  // Index of the layer with `id`; throws listing valid ids when unknown.
  std::size_t index_of(const std::string& id) const;
  bool has_layer(const std::string& id) const;
};

// Per-sample output shape of every layer. Throws naming the first layer whose
// input does not match what it expects. Also validates ids and injection points.
std::vector<Shape> propagate_shapes(const ModelSpec& spec);

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct LayerParams {
  std::string layer_id;
  std::vector<NamedTensor> tensors;

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
};

// Weights, biases and batch-norm parameters/running statistics, in layer order.
// Only layers that own parameters appear.
class ParameterStore {
 public:
  std::vector<LayerParams>& layers() { return layers_; }
  const std::vector<LayerParams>& layers() const { return layers_; }

  LayerParams* find(const std::string& layer_id);
  const LayerParams* find(const std::string& layer_id) const;

  bool operator==(const ParameterStore& other) const;

 private:
  std::vector<LayerParams> layers_;
};

// Expected parameter tensors (name, shape) for one layer.
std::vector<std::pair<std::string, Shape>> expected_params(const LayerSpec& layer);

struct ForwardOptions {
  bool training = false;
  // Parameters become tape variables (gradients available via ForwardResult::param_vars).
  bool params_require_grad = false;
  std::mt19937_64* dropout_rng = nullptr;  // required when training with dropout layers
};

struct ForwardResult {
  Var output;
  std::map<std::string, Var> captured;
  // Parallel to ParameterStore::layers(); empty entries for layers not run.
  std::vector<std::vector<Var>> param_vars;
  // Momentum-updated batch-norm statistics from a training pass, keyed by layer id.
  std::map<std::string, RunningStats> running_stats;
};

class Model {
 public:
  // Deterministic He-style initialization from `seed`.
  static Model build(ModelSpec spec, std::uint64_t seed);
  // Wraps existing parameters; throws on any shape mismatch (naming the layer).
  static Model from_params(ModelSpec spec, ParameterStore params);

  const ModelSpec& spec() const { return spec_; }
  const ParameterStore& params() const { return params_; }
  ParameterStore& params() { return params_; }
  const std::vector<Shape>& layer_shapes() const { return shapes_; }
  const Shape& output_shape_of(const std::string& layer_id) const;

  // Runs layers [begin, end) on `input` (batched). `capture` names layers whose
  // outputs are returned.
  ForwardResult forward_range(Tape& tape, Var input, std::size_t begin, std::size_t end,
                              const ForwardOptions& options = {}, const std::set<std::string>& capture = {}) const;

  ForwardResult forward(Tape& tape, Var input, const ForwardOptions& options = {},
                        const std::set<std::string>& capture = {}) const {
    return forward_range(tape, input, 0, spec_.layers.size(), options, capture);
  }

  // Inference-mode logits and captured activations for a batch.
  std::pair<Tensor, std::map<std::string, Tensor>> forward_capture(const Tensor& batch,
                                                                  const std::set<std::string>& capture_ids) const;
  Tensor logits(const Tensor& batch) const { return forward_capture(batch, {}).first; }

  // Applies running statistics gathered by a training forward pass.
  void apply_running_stats(const std::map<std::string, RunningStats>& stats);

 private:
  Model(ModelSpec spec, ParameterStore params, std::vector<Shape> shapes)
      : spec_(std::move(spec)), params_(std::move(params)), shapes_(std::move(shapes)) {}

  ModelSpec spec_;
  ParameterStore params_;
  std::vector<Shape> shapes_;
};

// Stacks equally shaped [C,H,W] tensors into [N,C,H,W].
Tensor stack(const std::vector<Tensor>& items);
Tensor stack(const std::vector<const Tensor*>& items);

}  // namespace viba::nn
