#include "viba/metrics/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "viba/error.hpp"
#include "viba/log.hpp"

namespace viba::metrics {
namespace {

double safe_ratio(double num, double den, const char* what) {
  if (den == 0.0) {
    warn(std::string("classification report: ") + what + " undefined (zero denominator), reported as 0");
    return 0.0;
  }
  return num / den;
}

double f1_of(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

double ece(std::span<const double> confidences, std::span<const int> predicted, std::span<const int> labels,
           std::size_t bins) {
  if (bins < 1) throw invalid_argument("ECE needs at least one bin");
  if (confidences.size() != predicted.size() || predicted.size() != labels.size()) {
    throw invalid_argument("ECE: length mismatch (" + std::to_string(confidences.size()) + " confidences, " +
                           std::to_string(predicted.size()) + " predictions, " + std::to_string(labels.size()) +
                           " labels)");
  }
  if (confidences.empty()) return 0.0;
  std::vector<double> conf_sum(bins, 0.0), correct(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw invalid_argument("ECE: confidence outside [0, 1]");
    const double raw = std::ceil(c * static_cast<double>(bins)) - 1.0;
    const auto b = static_cast<std::size_t>(std::clamp(raw, 0.0, static_cast<double>(bins - 1)));
    conf_sum[b] += c;
    correct[b] += predicted[i] == labels[i] ? 1.0 : 0.0;
    ++count[b];
  }
  const double n = static_cast<double>(confidences.size());
  double e = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double nb = static_cast<double>(count[b]);
    e += (nb / n) * std::abs(correct[b] / nb - conf_sum[b] / nb);
  }
  return e;
}

double ece(const Tensor& probabilities, std::span<const int> labels, std::size_t bins) {
  if (probabilities.rank() != 2) throw invalid_argument("ECE expects [N, K] probabilities");
  const std::size_t n = probabilities.dim(0), k = probabilities.dim(1);
  std::vector<double> conf(n);
  std::vector<int> pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = probabilities.raw() + i * k;
    const auto it = std::max_element(row, row + k);
    conf[i] = *it;
    pred[i] = static_cast<int>(it - row);
  }
  return ece(conf, pred, labels, bins);
}

ClassificationReport classification_report(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) {
    throw invalid_argument("classification report: " + std::to_string(predicted.size()) + " predictions for " +
                           std::to_string(labels.size()) + " labels");
  }
  ClassificationReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] == 1, t = labels[i] == 1;
    if (p && t) ++r.tp;
    else if (p && !t) ++r.fp;
    else if (!p && t) ++r.fn;
    else ++r.tn;
  }
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  r.accuracy = labels.empty() ? 0.0 : d(r.tp + r.tn) / d(labels.size());
  r.precision = safe_ratio(d(r.tp), d(r.tp + r.fp), "precision");
  r.recall = safe_ratio(d(r.tp), d(r.tp + r.fn), "recall");
  r.f1 = f1_of(r.precision, r.recall);
  const double neg_precision = safe_ratio(d(r.tn), d(r.tn + r.fn), "negative-class precision");
  const double neg_recall = safe_ratio(d(r.tn), d(r.tn + r.fp), "negative-class recall");
  r.macro_f1 = 0.5 * (r.f1 + f1_of(neg_precision, neg_recall));
  return r;
}

}  // namespace viba::metrics
