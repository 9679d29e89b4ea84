#include "viba/app/reports.hpp"

#include <algorithm>
#include <fstream>

#include "viba/error.hpp"
#include "viba/metrics/masks.hpp"
#include "viba/strings.hpp"

namespace viba::app {
namespace {

std::string join_codes(const std::vector<char>& codes) {
  std::string out;
  for (char c : codes) {
    if (!out.empty()) out += ' ';
    out += c;
  }
  return out;
}

std::string join_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out;
}

}  // namespace

std::string num(double v) { return format_double(v, 10); }

void CsvTable::add(std::vector<std::string> row) {
  if (row.size() != header_.size()) throw invalid_argument("csv row has " + std::to_string(row.size()) + " cells, header has " + std::to_string(header_.size()));
  rows_.push_back(std::move(row));
}

void CsvTable::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out << join_row(header_) << '\n';
  for (const auto& r : rows_) out << join_row(r) << '\n';
  if (!out) throw io_error("write failed for " + path.string());
}

ConsistencyRow consistency_of(const std::string& model, const VideoMaps& video, double quantile) {
  if (video.maps.empty()) throw data_error("video '" + video.video_id + "' has no maps");
  std::vector<metrics::BinaryMask> masks;
  masks.reserve(video.maps.size());
  for (const Plane& m : video.maps) masks.push_back(metrics::binarize_map(m, quantile));
  ConsistencyRow row;
  row.model = model;
  row.video_id = video.video_id;
  row.label = video.label;
  row.count = masks.size();
  row.iou = metrics::mean_consecutive_iou(masks);
  row.pairwise_iou = metrics::mean_pairwise_iou(masks);
  row.tcs = metrics::tcs(masks);
  row.rpi = masks.size() >= 2 ? metrics::rpi(masks) : 0.0;
  return row;
}

std::vector<ConsistencyRow> consistency_means(const std::vector<ConsistencyRow>& rows) {
  std::vector<std::string> models;
  for (const auto& r : rows)
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  std::vector<ConsistencyRow> out;
  for (const std::string& model : models) {
    std::vector<std::string> labels;
    for (const auto& r : rows)
      if (r.model == model && std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
    auto mean_of = [&](const std::string& label, bool all) {
      ConsistencyRow m;
      m.model = model;
      m.video_id = "mean";
      m.label = all ? "all" : label;
      for (const auto& r : rows) {
        if (r.model != model || (!all && r.label != label)) continue;
        ++m.count;
        m.iou += r.iou;
        m.pairwise_iou += r.pairwise_iou;
        m.tcs += r.tcs;
        m.rpi += r.rpi;
      }
      if (m.count) {
        const double n = static_cast<double>(m.count);
        m.iou /= n;
        m.pairwise_iou /= n;
        m.tcs /= n;
        m.rpi /= n;
      }
      return m;
    };
    for (const auto& label : labels) out.push_back(mean_of(label, false));
    out.push_back(mean_of("", true));
  }
  return out;
}

void write_consistency_csv(const std::filesystem::path& path, const std::vector<ConsistencyRow>& rows) {
  CsvTable t({"model", "video_id", "class", "count", "mean_iou", "mean_pairwise_iou", "tcs", "rpi"});
  auto add = [&t](const ConsistencyRow& r) {
    t.add({r.model, r.video_id, r.label, std::to_string(r.count), num(r.iou), num(r.pairwise_iou), num(r.tcs), num(r.rpi)});
  };
  for (const auto& r : rows) add(r);
  for (const auto& r : consistency_means(rows)) add(r);
  t.write(path);
}

void write_agreement_csv(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, metrics::AgreementReport>>& reports) {
  CsvTable t({"model", "video_id", "model_regions", "human_regions", "precision", "recall", "f1", "overlap", "top1_match"});
  for (const auto& [model, rep] : reports) {
    for (const auto& v : rep.videos) {
      t.add({model, v.video_id, join_codes(v.model_set), join_codes(v.human_set), num(v.precision), num(v.recall),
             num(v.f1), num(v.overlap), v.top1_match ? "1" : "0"});
    }
    t.add({model, "mean", "", "", num(rep.precision), num(rep.recall), num(rep.macro_f1), num(rep.overlap),
           num(rep.top1_rate)});
  }
  t.write(path);
}

void write_region_frequency_csv(const std::filesystem::path& path,
                                const std::vector<std::pair<std::string, metrics::AgreementReport>>& reports) {
  CsvTable t({"model", "region", "model_top3", "human_top3", "human_votes"});
  for (const auto& [model, rep] : reports)
    for (const auto& f : rep.frequencies)
      t.add({model, std::string(1, f.region), std::to_string(f.model_top3), std::to_string(f.human_top3),
             std::to_string(f.human_votes)});
  t.write(path);
}

void write_classification_csv(const std::filesystem::path& path, const std::vector<CalibrationRow>& rows) {
  CsvTable t({"model", "condition", "samples", "accuracy", "precision", "recall", "f1", "macro_f1", "ece"});
  for (const auto& r : rows)
    t.add({r.model, r.condition, std::to_string(r.samples), num(r.report.accuracy), num(r.report.precision),
           num(r.report.recall), num(r.report.f1), num(r.report.macro_f1), num(r.ece)});
  t.write(path);
}

void write_calibration_csv(const std::filesystem::path& path, const std::vector<CalibrationRow>& rows) {
  CsvTable t({"model", "condition", "samples", "bins", "ece"});
  for (const auto& r : rows)
    t.add({r.model, r.condition, std::to_string(r.samples), std::to_string(r.bins), num(r.ece)});
  t.write(path);
}

}  // namespace viba::app
