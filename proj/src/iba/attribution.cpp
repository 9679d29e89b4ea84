#include "viba/iba/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "viba/error.hpp"
#include "viba/nn/architectures.hpp"
#include "viba/rng.hpp"

namespace viba::iba {

CapacityMap attribution_map(const Tensor& lambda, const Tensor& r, const ActivationStats& stats, std::size_t width,
                            std::size_t height) {
  const Tensor cap = capacity(lambda, r, stats);
  const std::size_t c = cap.dim(0), h = cap.dim(1), w = cap.dim(2);
  CapacityMap out;
  out.raw = Plane(w, h);
  std::vector<double> acc(h * w, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * w; ++i) acc[i] += cap[ch * h * w + i];
  for (std::size_t i = 0; i < h * w; ++i) {
    out.raw.values[i] = static_cast<float>(acc[i]);
    out.total_bits += acc[i];
  }
  out.map = resize_bilinear(out.raw, width, height);
  return out;
}

FrameAttribution attribute_frame(const nn::Model& model, const Tensor& frame, const BottleneckConfig& config,
                                 const ActivationStats& stats, std::size_t frame_id) {
  if (frame.rank() != 3) throw invalid_argument("attribute_frame expects a (C,H,W) frame, got " + shape_to_string(frame.shape()));
  BottleneckConfig cfg = config;
  if (cfg.layer.empty()) cfg.layer = nn::default_injection_point(model.spec().name);
  if (!stats.layer_id.empty() && stats.layer_id != cfg.layer) {
    throw invalid_argument("statistics were estimated at '" + stats.layer_id + "' but the bottleneck sits at '" +
                           cfg.layer + "'");
  }
  std::mt19937_64 rng(derive_seed(cfg.seed, frame_id));

  const Tensor probs = softmax_rows(model.logits(frame.reshaped(Shape{1, frame.dim(0), frame.dim(1), frame.dim(2)})));
  FrameAttribution out;
  const std::size_t k = probs.dim(1);
  out.predicted = static_cast<int>(std::max_element(probs.data().begin(), probs.data().end()) - probs.data().begin());
  out.probability = probs[static_cast<std::size_t>(out.predicted)];

  OptimizeResult opt = optimize_lambda(model, frame, out.predicted, stats, cfg, rng);
  const Tensor lambda = opt.field.lambda();
  out.trace = std::move(opt.trace);
  out.map = attribution_map(lambda, opt.activation, stats, frame.dim(2), frame.dim(1));
  out.map.frame_id = frame_id;

  const Tensor injected = softmax_rows(injected_logits(model, frame, cfg.layer, lambda, stats, cfg.noise_samples, rng));
  const std::size_t samples = injected.dim(0);
  out.injected_probabilities.assign(k, 0.0f);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < samples; ++i) s += injected[i * k + j];
    out.injected_probabilities[j] = static_cast<float>(s / static_cast<double>(samples));
  }
  return out;
}

std::vector<FrameAttribution> attribute_sequence(const nn::Model& model, const std::vector<Tensor>& frames,
                                                 const std::vector<std::size_t>& frame_ids,
                                                 const BottleneckConfig& config, const ActivationStats& stats,
                                                 std::size_t workers) {
  if (frames.empty()) throw invalid_argument("attribute_sequence: no frames");
  if (frame_ids.size() != frames.size()) throw invalid_argument("attribute_sequence: one frame id per frame required");
  std::vector<FrameAttribution> out(frames.size());
  std::vector<std::exception_ptr> errors(frames.size());
  const int threads = static_cast<int>(std::max<std::size_t>(1, workers));
#pragma omp parallel for num_threads(threads) schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(frames.size()); ++i) {
    try {
      out[i] = attribute_frame(model, frames[i], config, stats, frame_ids[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<std::pair<std::string, FrameAttribution>> layer_sweep(
    const nn::Model& model, const Tensor& frame, const std::vector<std::string>& layer_ids,
    const BottleneckConfig& config, const std::map<std::string, ActivationStats>& stats_per_layer,
    std::size_t frame_id) {
  std::vector<std::pair<std::string, FrameAttribution>> out;
  for (const std::string& id : layer_ids) {
    model.spec().index_of(id);
    const auto it = stats_per_layer.find(id);
    if (it == stats_per_layer.end()) throw invalid_argument("no activation statistics for layer '" + id + "'");
    BottleneckConfig cfg = config;
    cfg.layer = id;
    out.emplace_back(id, attribute_frame(model, frame, cfg, it->second, frame_id));
  }
  return out;
}

std::array<std::uint8_t, 3> colormap(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto channel = [t](double centre) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(1.5 - std::abs(4.0 * t - centre), 0.0, 1.0)));
  };
  return {channel(3.0), channel(2.0), channel(1.0)};
}

RgbImage overlay_heatmap(const RgbImage& frame, const Plane& map, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw invalid_argument("overlay alpha must lie in [0, 1]");
  const Plane m = (map.width == frame.width && map.height == frame.height)
                      ? map
                      : resize_bilinear(map, frame.width, frame.height);
  float lo = 0.0f, hi = 0.0f;
  if (!m.values.empty()) {
    const auto [a, b] = std::minmax_element(m.values.begin(), m.values.end());
    lo = *a;
    hi = *b;
  }
  RgbImage out(frame.width, frame.height);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const double t = hi > lo ? (static_cast<double>(m.values[i]) - lo) / (static_cast<double>(hi) - lo) : 0.0;
    const auto col = colormap(t);
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = (1.0 - alpha) * frame.pixels[3 * i + c] + alpha * col[c];
      out.pixels[3 * i + c] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
    }
  }
  return out;
}

}  // namespace viba::iba
