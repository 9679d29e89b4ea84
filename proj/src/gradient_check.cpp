#include "viba/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "viba/error.hpp"

namespace viba {
namespace {

double evaluate(const GraphBuilder& build, const Tensor& x) {
  Tape tape;
  const Var in = tape.constant(x);
  const Var out = build(tape, in);
  return tape.value(out).item();
}

}  // namespace

double gradient_check(const GraphBuilder& build, const Tensor& input, GradientCheckOptions options) {
  if (!(options.step >= 1e-4f && options.step <= 1e-2f)) {
    throw invalid_argument("gradient_check: step must lie in [1e-4, 1e-2]");
  }

  Tape tape;
  const Var x = tape.variable(input);
  const Var loss = build(tape, x);
  const float base = tape.value(loss).item();
  const Tensor analytic = tape.backward(loss).of(x);

  const double again = evaluate(build, input);
  if (again != static_cast<double>(base)) {
    throw invalid_argument("gradient_check: graph is not deterministic");
  }

  std::vector<std::size_t> coords(input.numel());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coords.size() > options.max_coordinates) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coordinates);
  }

  double worst = 0.0;
  Tensor probe = input;
  for (std::size_t i : coords) {
    const float orig = probe[i];
    probe[i] = orig + options.step;
    const double plus = evaluate(build, probe);
    probe[i] = orig - options.step;
    const double minus = evaluate(build, probe);
    probe[i] = orig;
    // Divide by the actual float spacing of the probe points.
    const double h2 = static_cast<double>(orig + options.step) - static_cast<double>(orig - options.step);
    const double numeric = (plus - minus) / h2;
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace viba
