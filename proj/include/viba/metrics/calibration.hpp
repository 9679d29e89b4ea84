#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "viba/tensor.hpp"

namespace viba::metrics {

// Expected calibration error over `bins` equal-width confidence bins on (0, 1].
// A confidence c falls in bin ceil(c * bins) - 1 (clamped to the valid range).
double ece(std::span<const double> confidences, std::span<const int> predicted, std::span<const int> labels,
           std::size_t bins = 10);
// Confidence and prediction taken from rows of class probabilities [N, K].
double ece(const Tensor& probabilities, std::span<const int> labels, std::size_t bins = 10);

// Binary report with class 1 (fake) as the positive class. Divisions by zero
// yield 0 and a warning.
struct ClassificationReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;        // positive class
  double macro_f1 = 0.0;  // mean of both classes' F1
};

ClassificationReport classification_report(std::span<const int> predicted, std::span<const int> labels);

}  // namespace viba::metrics
