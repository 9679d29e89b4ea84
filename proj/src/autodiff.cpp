#include "viba/autodiff.hpp"

#include <string>

#include "viba/error.hpp"

namespace viba {

bool Gradients::has(Var v) const {
  return v.id >= 0 && static_cast<std::size_t>(v.id) < grads_.size() && grads_[v.id].has_value();
}

const Tensor& Gradients::of(Var v) const {
  if (!has(v)) throw invalid_argument("no gradient recorded for tensor id " + std::to_string(v.id));
  return *grads_[v.id];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (backward_done_) throw invalid_argument("tape already consumed by backward()");
  nodes_.push_back(Node{std::move(value), requires_grad, true, {}, {}});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (backward_done_) throw invalid_argument("tape already consumed by backward()");
  if (!value.all_finite()) {
    throw numeric_error("non-finite value produced by op #" + std::to_string(nodes_.size()) + " with shape " +
                        shape_to_string(value.shape()));
  }
  bool needs = false;
  for (Var in : inputs) needs = needs || node(in).requires_grad;
  nodes_.push_back(Node{std::move(value), needs, false, std::move(inputs), needs ? std::move(backward) : nullptr});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw invalid_argument("tensor id " + std::to_string(v.id) + " does not belong to this tape");
  }
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Gradients Tape::backward(Var loss) {
  if (backward_done_) throw invalid_argument("backward() called twice on the same tape");
  if (node(loss).value.numel() != 1) {
    throw invalid_argument("backward() needs a scalar loss, got shape " + shape_to_string(node(loss).value.shape()));
  }
  backward_done_ = true;

  std::vector<std::optional<Tensor>> grads(nodes_.size());
  if (nodes_[loss.id].requires_grad) grads[loss.id] = Tensor(nodes_[loss.id].value.shape(), 1.0f);

  std::vector<Tensor*> slots;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.is_leaf || !n.requires_grad || !grads[id]) continue;
    slots.assign(n.inputs.size(), nullptr);
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const int in = n.inputs[i].id;
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor(nodes_[in].value.shape(), 0.0f);
      slots[i] = &*grads[in];
    }
    n.backward(*grads[id], slots);
    grads[id].reset();
    n.backward = nullptr;
  }

  // Keep only leaf gradients; leaves that never received one get zeros.
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].is_leaf && nodes_[id].requires_grad) {
      if (!grads[id]) grads[id] = Tensor(nodes_[id].value.shape(), 0.0f);
    } else {
      grads[id].reset();
    }
  }
  return Gradients(std::move(grads));
}

}  // namespace viba
