#include "viba/nn/model.hpp"

#include <cmath>
#include <sstream>

#include "viba/error.hpp"
#include "viba/rng.hpp"

namespace viba::nn {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string layer_error(const LayerSpec& layer, const std::string& detail) {
  return "layer '" + layer.id + "' (" + kind_name(layer.kind) + "): " + detail;
}

Shape conv_out(const LayerSpec& layer, const Shape& in, std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (in.size() != 3) throw invalid_argument(layer_error(layer, "expects a C x H x W input, got " + shape_to_string(in)));
  if (in[0] != in_channels) {
    throw invalid_argument(layer_error(layer, "expects " + std::to_string(in_channels) + " input channels, got " +
                                                  shape_to_string(in)));
  }
  if (stride == 0 || kernel == 0 || kernel > in[1] + 2 * padding || kernel > in[2] + 2 * padding) {
    throw invalid_argument(layer_error(layer, "kernel does not fit input " + shape_to_string(in)));
  }
  return Shape{out_channels, (in[1] + 2 * padding - kernel) / stride + 1, (in[2] + 2 * padding - kernel) / stride + 1};
}

Tensor he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

std::string kind_name(const LayerKind& kind) {
  return std::visit(Overloaded{[](const ConvLayer&) { return std::string("conv"); },
                               [](const SeparableConvLayer&) { return std::string("separable_conv"); },
                               [](const BatchNormLayer&) { return std::string("batch_norm"); },
                               [](const ReluLayer&) { return std::string("relu"); },
                               [](const MaxPoolLayer&) { return std::string("max_pool"); },
                               [](const FlattenLayer&) { return std::string("flatten"); },
                               [](const DropoutLayer&) { return std::string("dropout"); },
                               [](const LinearLayer&) { return std::string("linear"); }},
                    kind);
}

std::size_t ModelSpec::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].id == id) return i;
  }
  std::ostringstream os;
  os << "unknown layer id '" << id << "' in model '" << name << "'; injection points:";
  for (const auto& p : injection_points) os << ' ' << p;
  throw config_error(os.str());
}

bool ModelSpec::has_layer(const std::string& id) const {
  for (const auto& l : layers) {
    if (l.id == id) return true;
  }
  return false;
}

std::vector<Shape> propagate_shapes(const ModelSpec& spec) {
  std::set<std::string> seen;
  for (const auto& l : spec.layers) {
    if (l.id.empty() || !seen.insert(l.id).second) throw invalid_argument("duplicate or empty layer id '" + l.id + "'");
  }
  for (const auto& p : spec.injection_points) {
    if (!seen.count(p)) throw invalid_argument("injection point '" + p + "' does not name a layer");
  }
  std::vector<Shape> shapes;
  Shape cur = spec.input_shape;
  for (const LayerSpec& layer : spec.layers) {
    cur = std::visit(
        Overloaded{
            [&](const ConvLayer& c) {
              return conv_out(layer, cur, c.in_channels, c.out_channels, c.kernel, c.stride, c.padding);
            },
            [&](const SeparableConvLayer& c) {
              if (c.kernel % 2 == 0) throw invalid_argument(layer_error(layer, "kernel must be odd"));
              return conv_out(layer, cur, c.in_channels, c.out_channels, c.kernel, 1, c.kernel / 2);
            },
            [&](const BatchNormLayer& b) {
              if (cur.size() != 3 || cur[0] != b.channels) {
                throw invalid_argument(layer_error(layer, "expects " + std::to_string(b.channels) +
                                                              " channels, got " + shape_to_string(cur)));
              }
              if (!(b.eps > 0.0f)) throw invalid_argument(layer_error(layer, "eps must be > 0"));
              return cur;
            },
            [&](const ReluLayer&) { return cur; },
            [&](const MaxPoolLayer& m) {
              if (cur.size() != 3 || m.kernel > cur[1] + 2 * m.padding || m.kernel > cur[2] + 2 * m.padding ||
                  m.padding >= m.kernel || m.stride == 0) {
                throw invalid_argument(layer_error(layer, "pooling window does not fit " + shape_to_string(cur)));
              }
              return Shape{cur[0], (cur[1] + 2 * m.padding - m.kernel) / m.stride + 1,
                           (cur[2] + 2 * m.padding - m.kernel) / m.stride + 1};
            },
            [&](const FlattenLayer&) { return Shape{shape_numel(cur)}; },
            [&](const DropoutLayer& d) {
              if (!(d.keep_prob > 0.0f && d.keep_prob <= 1.0f)) {
                throw invalid_argument(layer_error(layer, "keep probability must be in (0, 1]"));
              }
              return cur;
            },
            [&](const LinearLayer& l) {
              if (cur.size() != 1 || cur[0] != l.in_features) {
                throw invalid_argument(layer_error(layer, "expects " + std::to_string(l.in_features) +
                                                              " features, got " + shape_to_string(cur)));
              }
              return Shape{l.out_features};
            }},
        layer.kind);
    shapes.push_back(cur);
  }
  return shapes;
}

Tensor& LayerParams::get(const std::string& name) {
  for (auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw invalid_argument("layer '" + layer_id + "' has no tensor '" + name + "'");
}

const Tensor& LayerParams::get(const std::string& name) const {
  return const_cast<LayerParams*>(this)->get(name);
}

LayerParams* ParameterStore::find(const std::string& layer_id) {
  for (auto& l : layers_) {
    if (l.layer_id == layer_id) return &l;
  }
  return nullptr;
}

const LayerParams* ParameterStore::find(const std::string& layer_id) const {
  return const_cast<ParameterStore*>(this)->find(layer_id);
}

bool ParameterStore::operator==(const ParameterStore& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.layer_id != b.layer_id || a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t j = 0; j < a.tensors.size(); ++j) {
      if (a.tensors[j].name != b.tensors[j].name || !(a.tensors[j].value == b.tensors[j].value)) return false;
    }
  }
  return true;
}

std::vector<std::pair<std::string, Shape>> expected_params(const LayerSpec& layer) {
  using Params = std::vector<std::pair<std::string, Shape>>;
  return std::visit(
      Overloaded{[](const ConvLayer& c) {
                   return Params{{"weight", {c.out_channels, c.in_channels, c.kernel, c.kernel}}};
                 },
                 [](const SeparableConvLayer& c) {
                   return Params{{"depthwise", {c.in_channels, 1, c.kernel, c.kernel}},
                                 {"pointwise", {c.out_channels, c.in_channels, 1, 1}}};
                 },
                 [](const BatchNormLayer& b) {
                   return Params{{"gamma", {b.channels}},
                                 {"beta", {b.channels}},
                                 {"running_mean", {b.channels}},
                                 {"running_var", {b.channels}}};
                 },
                 [](const LinearLayer& l) {
                   return Params{{"weight", {l.in_features, l.out_features}}, {"bias", {l.out_features}}};
                 },
                 [](const auto&) { return Params{}; }},
      layer.kind);
}

Model Model::build(ModelSpec spec, std::uint64_t seed) {
  std::vector<Shape> shapes = propagate_shapes(spec);
  ParameterStore store;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    auto expected = expected_params(layer);
    if (expected.empty()) continue;
    std::mt19937_64 rng(derive_seed(seed, i));
    LayerParams lp{layer.id, {}};
    std::visit(Overloaded{[&](const ConvLayer& c) {
                            lp.tensors.push_back({"weight", he_normal(expected[0].second,
                                                                      c.in_channels * c.kernel * c.kernel, rng)});
                          },
                          [&](const SeparableConvLayer& c) {
                            lp.tensors.push_back({"depthwise", he_normal(expected[0].second, c.kernel * c.kernel, rng)});
                            lp.tensors.push_back({"pointwise", he_normal(expected[1].second, c.in_channels, rng)});
                          },
                          [&](const BatchNormLayer& b) {
                            lp.tensors.push_back({"gamma", Tensor(Shape{b.channels}, 1.0f)});
                            lp.tensors.push_back({"beta", Tensor(Shape{b.channels}, 0.0f)});
                            lp.tensors.push_back({"running_mean", Tensor(Shape{b.channels}, 0.0f)});
                            lp.tensors.push_back({"running_var", Tensor(Shape{b.channels}, 1.0f)});
                          },
                          [&](const LinearLayer& l) {
                            lp.tensors.push_back({"weight", he_normal(expected[0].second, l.in_features, rng)});
                            lp.tensors.push_back({"bias", Tensor(Shape{l.out_features}, 0.0f)});
                          },
                          [](const auto&) {}},
               layer.kind);
    store.layers().push_back(std::move(lp));
  }
  return Model(std::move(spec), std::move(store), std::move(shapes));
}

Model Model::from_params(ModelSpec spec, ParameterStore params) {
  std::vector<Shape> shapes = propagate_shapes(spec);
  std::size_t next = 0;
  for (const LayerSpec& layer : spec.layers) {
    auto expected = expected_params(layer);
    if (expected.empty()) continue;
    if (next >= params.layers().size() || params.layers()[next].layer_id != layer.id) {
      throw data_error("parameter mismatch at layer '" + layer.id + "': " +
                       (next < params.layers().size() ? "found '" + params.layers()[next].layer_id + "'"
                                                      : std::string("missing")));
    }
    const LayerParams& lp = params.layers()[next++];
    if (lp.tensors.size() != expected.size()) {
      throw data_error("parameter mismatch at layer '" + layer.id + "': expected " + std::to_string(expected.size()) +
                       " tensors, found " + std::to_string(lp.tensors.size()));
    }
    for (std::size_t j = 0; j < expected.size(); ++j) {
      if (lp.tensors[j].name != expected[j].first || lp.tensors[j].value.shape() != expected[j].second) {
        throw data_error("shape mismatch at layer '" + layer.id + "': tensor '" + lp.tensors[j].name + "' " +
                         shape_to_string(lp.tensors[j].value.shape()) + ", expected '" + expected[j].first + "' " +
                         shape_to_string(expected[j].second));
      }
    }
  }
  if (next != params.layers().size()) {
    throw data_error("parameter mismatch: unexpected extra layer '" + params.layers()[next].layer_id + "'");
  }
  return Model(std::move(spec), std::move(params), std::move(shapes));
}

const Shape& Model::output_shape_of(const std::string& layer_id) const { return shapes_[spec_.index_of(layer_id)]; }

ForwardResult Model::forward_range(Tape& tape, Var input, std::size_t begin, std::size_t end,
                                   const ForwardOptions& options, const std::set<std::string>& capture) const {
  for (const auto& id : capture) spec_.index_of(id);
  if (begin > end || end > spec_.layers.size()) throw invalid_argument("forward_range: bad layer range");

  ForwardResult result;
  result.param_vars.resize(params_.layers().size());
  const Shape expected_in = begin == 0 ? spec_.input_shape : shapes_[begin - 1];
  const Shape& in_shape = tape.shape(input);
  if (in_shape.empty() || Shape(in_shape.begin() + 1, in_shape.end()) != expected_in) {
    throw invalid_argument("model '" + spec_.name + "' expects per-sample input " + shape_to_string(expected_in) +
                           " at layer " + std::to_string(begin) + ", got " + shape_to_string(in_shape));
  }

  std::size_t param_index = 0;
  for (std::size_t i = 0; i < begin; ++i) {
    if (!expected_params(spec_.layers[i]).empty()) ++param_index;
  }

  Var x = input;
  for (std::size_t i = begin; i < end; ++i) {
    const LayerSpec& layer = spec_.layers[i];
    const LayerParams* lp = nullptr;
    std::vector<Var> pv;
    if (!expected_params(layer).empty()) {
      lp = &params_.layers()[param_index];
      for (const auto& t : lp->tensors) {
        if (t.name == "running_mean" || t.name == "running_var") continue;
        pv.push_back(tape.leaf(t.value, options.params_require_grad));
      }
      result.param_vars[param_index] = pv;
      ++param_index;
    }
    x = std::visit(
        Overloaded{[&](const ConvLayer& c) { return conv2d(tape, x, pv[0], {c.stride, c.padding, 1}); },
                   [&](const SeparableConvLayer&) { return separable_conv2d(tape, x, pv[0], pv[1]); },
                   [&](const BatchNormLayer& b) {
                     BatchNormOptions bo{b.eps, b.momentum, options.training};
                     if (!options.training) {
                       return batch_norm2d(tape, x, pv[0], pv[1], lp->get("running_mean"), lp->get("running_var"), bo);
                     }
                     RunningStats updated;
                     const Var out = batch_norm2d(tape, x, pv[0], pv[1], lp->get("running_mean"),
                                                  lp->get("running_var"), bo, &updated);
                     result.running_stats[layer.id] = std::move(updated);
                     return out;
                   },
                   [&](const ReluLayer&) { return relu(tape, x); },
                   [&](const MaxPoolLayer& m) { return max_pool2d(tape, x, {m.kernel, m.stride, m.padding}); },
                   [&](const FlattenLayer&) { return flatten(tape, x); },
                   [&](const DropoutLayer& d) {
                     if (!options.training) return x;
                     if (!options.dropout_rng) throw invalid_argument("training forward needs a dropout rng");
                     return dropout(tape, x, d.keep_prob, *options.dropout_rng);
                   },
                   [&](const LinearLayer&) { return linear(tape, x, pv[0], pv[1]); }},
        layer.kind);
    if (capture.count(layer.id)) result.captured[layer.id] = x;
  }
  result.output = x;
  return result;
}

std::pair<Tensor, std::map<std::string, Tensor>> Model::forward_capture(const Tensor& batch,
                                                                       const std::set<std::string>& capture_ids) const {
  Tape tape;
  const Var in = tape.constant(batch);
  ForwardResult r = forward(tape, in, {}, capture_ids);
  std::map<std::string, Tensor> captured;
  for (const auto& [id, v] : r.captured) captured[id] = tape.value(v);
  return {tape.value(r.output), std::move(captured)};
}

void Model::apply_running_stats(const std::map<std::string, RunningStats>& stats) {
  for (const auto& [id, rs] : stats) {
    LayerParams* lp = params_.find(id);
    if (!lp) throw invalid_argument("no batch-norm layer '" + id + "'");
    lp->get("running_mean") = rs.mean;
    lp->get("running_var") = rs.var;
  }
}

Tensor stack(const std::vector<const Tensor*>& items) {
  if (items.empty()) throw invalid_argument("stack: no tensors");
  const Shape& s = items[0]->shape();
  Shape out_shape{items.size()};
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  Tensor out(out_shape);
  const std::size_t n = items[0]->numel();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->shape() != s) {
      throw invalid_argument("stack: shape " + shape_to_string(items[i]->shape()) + " differs from " +
                             shape_to_string(s));
    }
    std::copy(items[i]->raw(), items[i]->raw() + n, out.raw() + i * n);
  }
  return out;
}

Tensor stack(const std::vector<Tensor>& items) {
  std::vector<const Tensor*> ptrs;
  for (const auto& t : items) ptrs.push_back(&t);
  return stack(ptrs);
}

}  // namespace viba::nn
