#pragma once

#include <cstdint>
#include <functional>

#include "viba/autodiff.hpp"

namespace viba {

// Builds a scalar-valued graph on `tape` from the checked variable.
using GraphBuilder = std::function<Var(Tape& tape, Var x)>;

struct GradientCheckOptions {
  float step = 1e-3f;             // central-difference step, must lie in [1e-4, 1e-2]
  std::size_t max_coordinates = 64;  // coordinates sampled (all when numel is smaller)
  std::uint64_t seed = 0;
};

/// Max over sampled coordinates of |analytic - central difference| / max(1, |central difference|).
/// Throws if the graph does not evaluate bit-identically twice at the same input.
double gradient_check(const GraphBuilder& build, const Tensor& input, GradientCheckOptions options = {});

}  // namespace viba
