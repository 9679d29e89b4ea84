#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "viba/image.hpp"
#include "viba/metrics/agreement.hpp"
#include "viba/metrics/calibration.hpp"

namespace viba::app {

// Numbers in every report use "%.10g".
std::string num(double v);

// Collects rows and writes them in one go; throws io_error on failure.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row);
  void write(const std::filesystem::path& path) const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct VideoMaps {
  std::string video_id;
  std::string label;  // "real", "fake" or "" when unknown
  std::vector<Plane> maps;
};

struct ConsistencyRow {
  std::string model;
  std::string video_id;  // "mean" on aggregate rows
  std::string label;     // "all" on the overall aggregate
  std::size_t count = 0;  // frames, or videos on aggregate rows
  double iou = 0.0;       // consecutive frames
  double pairwise_iou = 0.0;
  double tcs = 0.0;
  double rpi = 0.0;
};

ConsistencyRow consistency_of(const std::string& model, const VideoMaps& video, double quantile);

// Per-class means (in first-appearance order of the labels) followed by the
// mean over all videos, for each model in first-appearance order.
std::vector<ConsistencyRow> consistency_means(const std::vector<ConsistencyRow>& rows);

// Columns: model,video_id,class,count,mean_iou,mean_pairwise_iou,tcs,rpi.
// Video rows first, then the aggregates from consistency_means.
void write_consistency_csv(const std::filesystem::path& path, const std::vector<ConsistencyRow>& rows);

// Columns: model,video_id,model_regions,human_regions,precision,recall,f1,overlap,top1_match
// plus one "mean" row per model.
void write_agreement_csv(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, metrics::AgreementReport>>& reports);
// Columns: model,region,model_top3,human_top3,human_votes.
void write_region_frequency_csv(const std::filesystem::path& path,
                                const std::vector<std::pair<std::string, metrics::AgreementReport>>& reports);

struct CalibrationRow {
  std::string model;
  std::string condition;  // "baseline" or "injected"
  std::size_t samples = 0;
  std::size_t bins = 10;
  metrics::ClassificationReport report;
  double ece = 0.0;
};

// Columns: model,condition,samples,accuracy,precision,recall,f1,macro_f1,ece.
void write_classification_csv(const std::filesystem::path& path, const std::vector<CalibrationRow>& rows);
// Columns: model,condition,samples,bins,ece.
void write_calibration_csv(const std::filesystem::path& path, const std::vector<CalibrationRow>& rows);

}  // namespace viba::app
