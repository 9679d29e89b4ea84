#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

#include "viba/app/commands.hpp"
#include "viba/app/reports.hpp"
#include "viba/error.hpp"
#include "viba/iba/attribution.hpp"
#include "viba/metrics/masks.hpp"
#include "viba/nn/architectures.hpp"
#include "viba/nn/weights_io.hpp"
#include "viba/rng.hpp"
#include "viba/synth/synth.hpp"
#include "viba/video/pipeline.hpp"

namespace fs = std::filesystem;

namespace viba::app {
namespace {

using Clock = std::chrono::steady_clock;

// Thresholds of the acceptance checks the pipeline can measure itself.
constexpr double kMaxAccuracyGapPp = 2.0;
constexpr double kLocalizationRatio = 2.0;
constexpr double kSpatialLocalized = 0.8;
constexpr double kTemporalLocalized = 0.7;
constexpr std::size_t kMinFakes = 50;
constexpr double kMinValidationAccuracy = 0.9;
constexpr std::size_t kEpochBudget = 30;
constexpr double kMinStaticIou = 0.9;
constexpr double kMaxStaticRpi = 0.05;

struct Check {
  int criterion = 0;
  std::string model;
  std::string measure;
  double value = 0.0;
  double threshold = 0.0;
  bool at_most = false;  // pass when value <= threshold instead of >=
  bool pass() const { return at_most ? value <= threshold : value >= threshold; }
};

struct ModelRun {
  std::string kind;
  std::vector<synth::LabeledSample> eval;
  std::vector<Tensor> eval_inputs;
  nn::TrainResult training;
  std::vector<iba::FrameAttribution> results;
};

class Progress {
 public:
  explicit Progress(std::ostream* log) : log_(log), start_(Clock::now()) {}
  void operator()(const std::string& msg) const {
    if (!log_) return;
    const double s = std::chrono::duration<double>(Clock::now() - start_).count();
    *log_ << "[" << std::fixed << std::setprecision(1) << std::setw(7) << s << "s] " << msg << std::endl;
    log_->unsetf(std::ios::floatfield);
  }

 private:
  std::ostream* log_;
  Clock::time_point start_;
};

std::vector<Tensor> inputs_of(const std::string& kind, const std::vector<synth::LabeledSample>& samples,
                              const flow::PyramidConfig& flow_cfg) {
  std::vector<Tensor> out(samples.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i)
    out[i] = sample_input(kind, samples[i].frames, flow_cfg);
  return out;
}

nn::Dataset examples_of(const std::vector<Tensor>& inputs, const std::vector<synth::LabeledSample>& samples,
                        std::size_t begin, std::size_t end) {
  nn::Dataset out;
  for (std::size_t i = begin; i < end; ++i) out.push_back({inputs[i], samples[i].label});
  return out;
}

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

int argmax(const std::vector<float>& p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

void write_video_maps(const fs::path& dir, const std::vector<iba::FrameAttribution>& results,
                      const std::vector<RgbImage>& shown, double alpha, const fs::path& overlay_dir) {
  make_dir(dir);
  make_dir(overlay_dir);
  CsvTable predictions({"frame_id", "class", "probability"});
  for (std::size_t t = 0; t < results.size(); ++t) {
    const std::string name = video::frame_file_name(t);
    const std::string base = name.substr(0, name.size() - 4);
    iba::write_capacity(dir / (base + ".vcap"), results[t].map);
    write_ppm(overlay_dir / name, iba::overlay_heatmap(shown[t], results[t].map.map, alpha));
    predictions.add({std::to_string(t), synth::label_name(results[t].predicted), num(results[t].probability)});
  }
  predictions.write(dir / "predictions.csv");
}

double best_accuracy_within(const nn::TrainResult& r, std::size_t epochs) {
  double best = 0.0;
  for (const auto& h : r.history)
    if (h.epoch <= epochs) best = std::max(best, h.validation_accuracy);
  return best;
}

}  // namespace

int cmd_e2e(const Context& ctx) {
  const RunConfig& cfg = ctx.config;
  const Progress progress(ctx.log);
  const std::uint64_t seed = cfg.seed();
  const std::size_t workers = std::max<std::size_t>(1, ctx.workers);
  omp_set_num_threads(static_cast<int>(workers));

  make_dir(ctx.out);
  cfg.echo_to(ctx.out);
  const fs::path data = ctx.out / "data", models = ctx.out / "models", stats_dir = ctx.out / "stats",
                 maps = ctx.out / "maps", overlays = ctx.out / "overlays", reports = ctx.out / "reports";
  for (const auto& d : {data, models, stats_dir, maps, overlays, reports}) {
    make_dir(d);
    cfg.echo_to(d);
  }

  const auto flow_cfg = cfg.flow();
  const auto train_cfg = cfg.train();
  const double val_fraction = cfg.real("train.validation_fraction");
  const double quantile = cfg.real("metrics.quantile");
  const std::size_t bins = cfg.integer("metrics.ece_bins");
  const double alpha = cfg.real("overlay.alpha");
  const std::size_t eval_count = cfg.integer("e2e.eval_count");
  const bool real_only = cfg.get("iba.calibration") == "real";

  // Data.
  const auto sp_train = synth::gen_spatial_dataset(cfg.synth(cfg.integer("e2e.spatial_train_count"), seed));
  const auto tp_train = synth::gen_temporal_dataset(cfg.synth(cfg.integer("e2e.temporal_train_count"), seed));
  ModelRun spatial{nn::kToyXception, synth::gen_spatial_dataset(cfg.synth(eval_count, seed + 1000)), {}, {}, {}};
  ModelRun temporal{nn::kToyVgg, synth::gen_temporal_dataset(cfg.synth(eval_count, seed + 1000)), {}, {}, {}};
  auto motion_cfg = cfg.synth(cfg.integer("e2e.motion_videos"), seed + 2000);
  motion_cfg.sequence_length = cfg.integer("e2e.motion_length");
  const auto motion = synth::gen_temporal_dataset(motion_cfg);
  synth::write_dataset(data / "spatial_eval", spatial.eval);
  synth::write_dataset(data / "temporal_eval", temporal.eval);
  synth::write_dataset(data / "motion", motion);
  progress("generated " + std::to_string(sp_train.size()) + " + " + std::to_string(tp_train.size()) +
           " training samples, " + std::to_string(eval_count) + " evaluation samples per model");

  // Training and activation statistics.
  std::vector<std::pair<ModelRun*, const std::vector<synth::LabeledSample>*>> runs = {{&spatial, &sp_train},
                                                                                     {&temporal, &tp_train}};
  std::vector<nn::Model> trained;
  std::vector<iba::ActivationStats> stats;
  CsvTable training({"model", "epoch", "train_loss", "validation_loss", "validation_accuracy", "best"});
  for (auto& [run, train_set] : runs) {
    const auto inputs = inputs_of(run->kind, *train_set, flow_cfg);
    const std::size_t split = validation_split_point(train_set->size(), val_fraction);
    const nn::Dataset tr = examples_of(inputs, *train_set, 0, split);
    const nn::Dataset va = examples_of(inputs, *train_set, split, train_set->size());
    nn::Model model = nn::Model::build(nn::spec_by_name(run->kind), seed);
    run->training = nn::train_model(model, tr, va, train_cfg);
    for (const auto& h : run->training.history)
      training.add({run->kind, std::to_string(h.epoch), num(h.train_loss), num(h.validation_loss),
                    num(h.validation_accuracy), h.epoch == run->training.best_epoch ? "1" : "0"});
    nn::save_weights(model, models / (run->kind + ".vwts"));
    progress("trained " + run->kind + ": " + std::to_string(run->training.history.size()) + " epochs, best " +
             std::to_string(run->training.best_epoch));

    const auto bc = cfg.bottleneck(run->kind);
    std::vector<Tensor> calibration;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (!real_only || (*train_set)[i].label == synth::kReal) calibration.push_back(inputs[i]);
    stats.push_back(iba::estimate_stats(model, bc.layer, calibration, bc.sigma_floor));
    iba::write_stats(stats_dir / (run->kind + "_" + bc.layer + ".txt"), stats.back());
    trained.push_back(std::move(model));
  }
  training.write(reports / "training.csv");

  // Attribution of the evaluation splits.
  std::vector<CalibrationRow> calibration_rows;
  CsvTable localization({"model", "sample_id", "region_area_fraction", "mass_fraction", "ratio", "localized"});
  std::vector<Check> checks;
  std::vector<std::pair<std::string, metrics::AgreementReport>> agreement;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    ModelRun& run = *runs[r].first;
    const nn::Model& model = trained[r];
    const auto bc = cfg.bottleneck(run.kind);
    run.eval_inputs = inputs_of(run.kind, run.eval, flow_cfg);
    run.results = iba::attribute_sequence(model, run.eval_inputs, iota_ids(run.eval.size()), bc, stats[r], workers);
    progress("attributed " + std::to_string(run.results.size()) + " " + run.kind + " evaluation inputs");

    CsvTable preds({"sample_id", "label", "predicted", "probability", "injected_predicted", "injected_probability"});
    std::vector<int> labels, base_pred, inj_pred;
    std::vector<double> base_conf, inj_conf;
    for (std::size_t i = 0; i < run.eval.size(); ++i) {
      const auto& fa = run.results[i];
      const int ip = argmax(fa.injected_probabilities);
      labels.push_back(run.eval[i].label);
      base_pred.push_back(fa.predicted);
      base_conf.push_back(fa.probability);
      inj_pred.push_back(ip);
      inj_conf.push_back(fa.injected_probabilities[static_cast<std::size_t>(ip)]);
      preds.add({run.eval[i].id, synth::label_name(run.eval[i].label), synth::label_name(fa.predicted),
                 num(fa.probability), synth::label_name(ip), num(inj_conf.back())});
      const fs::path sdir = maps / run.kind / "eval" / run.eval[i].id;
      make_dir(sdir);
      iba::write_capacity(sdir / "frame_0000.vcap", fa.map);
      const fs::path odir = overlays / run.kind / "eval";
      make_dir(odir);
      write_ppm(odir / (run.eval[i].id + ".ppm"), iba::overlay_heatmap(run.eval[i].frames[0], fa.map.map, alpha));
    }
    preds.write(reports / ("predictions_" + run.kind + ".csv"));
    CalibrationRow base{run.kind, "baseline", labels.size(), bins, metrics::classification_report(base_pred, labels),
                        metrics::ece(base_conf, base_pred, labels, bins)};
    CalibrationRow inj{run.kind, "injected", labels.size(), bins, metrics::classification_report(inj_pred, labels),
                       metrics::ece(inj_conf, inj_pred, labels, bins)};
    calibration_rows.push_back(base);
    calibration_rows.push_back(inj);
    // From counts, so a gap of exactly 2 pp is not lost to rounding.
    const auto correct = [](const metrics::ClassificationReport& r) { return static_cast<double>(r.tp + r.tn); };
    checks.push_back({4, run.kind, "accuracy_gap_pp",
                      100.0 * std::abs(correct(inj.report) - correct(base.report)) / static_cast<double>(labels.size()),
                      kMaxAccuracyGapPp, true});

    // Known-artefact localization on the fakes.
    std::size_t fakes = 0, localized = 0;
    std::vector<metrics::VideoRegionInput> regions;
    for (std::size_t i = 0; i < run.eval.size(); ++i) {
      const auto& s = run.eval[i];
      if (s.label != synth::kFake) continue;
      ++fakes;
      const Plane& m = run.results[i].map.map;
      double inside = 0.0, total = 0.0;
      for (std::size_t p = 0; p < m.values.size(); ++p) {
        total += m.values[p];
        if (s.mask.bits[p]) inside += m.values[p];
      }
      const double area = static_cast<double>(s.mask.count()) / static_cast<double>(s.mask.bits.size());
      const double frac = total > 0.0 ? inside / total : 0.0;
      const double ratio = frac / area;
      const bool ok = ratio >= kLocalizationRatio;
      localized += ok;
      localization.add({run.kind, s.id, num(area), num(frac), num(ratio), ok ? "1" : "0"});

      // Generated annotations: every annotator names the true region except
      // the last, who picks a random one half of the time.
      metrics::VideoRegionInput v;
      v.video_id = s.id;
      v.mass = m;
      v.taxonomy = synth::region_taxonomy(m.width, m.height);
      const std::size_t annotators = cfg.integer("e2e.annotators");
      for (std::size_t a = 0; a < annotators; ++a) {
        std::mt19937_64 rng(derive_seed(seed, {3, i, a}));
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        char code = s.region;
        if (a + 1 == annotators && coin(rng) < 0.5)
          code = metrics::kRegionCodes[std::uniform_int_distribution<std::size_t>(0, metrics::kRegionCodes.size() - 1)(rng)];
        v.annotations.push_back(code);
      }
      regions.push_back(std::move(v));
    }
    std::vector<metrics::AnnotationRecord> records;
    for (const auto& v : regions)
      for (std::size_t a = 0; a < v.annotations.size(); ++a)
        records.push_back({v.video_id, "a" + std::to_string(a), v.annotations[a]});
    metrics::write_annotations_csv(data / ("annotations_" + run.kind + ".csv"), records);
    agreement.emplace_back(run.kind, metrics::region_agreement(regions));
    checks.push_back({5, run.kind, "fakes_evaluated", static_cast<double>(fakes), static_cast<double>(kMinFakes), false});
    checks.push_back({5, run.kind, "localized_fraction", fakes ? static_cast<double>(localized) / fakes : 0.0,
                      r == 0 ? kSpatialLocalized : kTemporalLocalized, false});
    checks.push_back({9, run.kind, "validation_accuracy", best_accuracy_within(run.training, kEpochBudget),
                      kMinValidationAccuracy, false});
  }
  write_classification_csv(reports / "classification.csv", calibration_rows);
  write_calibration_csv(reports / "calibration.csv", calibration_rows);
  localization.write(reports / "localization.csv");
  write_agreement_csv(reports / "agreement.csv", agreement);
  write_region_frequency_csv(reports / "region_frequency.csv", agreement);

  // Sequence consistency: static sequences through the spatial model, moving
  // sequences (flow pairs) through the temporal model.
  std::vector<ConsistencyRow> consistency;
  {
    const auto bc = cfg.bottleneck(spatial.kind);
    const std::size_t per_class = cfg.integer("e2e.static_videos") / 2;
    const std::size_t length = cfg.integer("e2e.static_length");
    std::vector<std::size_t> chosen;
    for (int label : {synth::kReal, synth::kFake}) {
      std::size_t taken = 0;
      for (std::size_t i = 0; i < spatial.eval.size() && taken < per_class; ++i)
        if (spatial.eval[i].label == label) {
          chosen.push_back(i);
          ++taken;
        }
    }
    for (std::size_t i : chosen) {
      const auto& s = spatial.eval[i];
      const std::vector<Tensor> frames(length, spatial.eval_inputs[i]);
      const auto res = iba::attribute_sequence(trained[0], frames, iota_ids(length), bc, stats[0], workers);
      VideoMaps v{"static_" + s.id, synth::label_name(s.label), {}};
      for (const auto& fa : res) v.maps.push_back(fa.map.map);
      consistency.push_back(consistency_of(spatial.kind, v, quantile));
      write_video_maps(maps / spatial.kind / "static" / v.video_id, res,
                       std::vector<RgbImage>(length, s.frames[0]), alpha, overlays / spatial.kind / "static" / v.video_id);
    }
    progress("attributed " + std::to_string(chosen.size()) + " static sequences");
  }
  {
    const auto bc = cfg.bottleneck(temporal.kind);
    for (const auto& s : motion) {
      std::vector<Tensor> frames;
      std::vector<RgbImage> shown;
      for (std::size_t t = 0; t + 1 < s.frames.size(); ++t) {
        frames.push_back(video::normalize_for_model(flow_color_image(s.frames[t], s.frames[t + 1], flow_cfg)));
        shown.push_back(s.frames[t]);
      }
      const auto res = iba::attribute_sequence(trained[1], frames, iota_ids(frames.size()), bc, stats[1], workers);
      VideoMaps v{"motion_" + s.id, synth::label_name(s.label), {}};
      for (const auto& fa : res) v.maps.push_back(fa.map.map);
      consistency.push_back(consistency_of(temporal.kind, v, quantile));
      write_video_maps(maps / temporal.kind / "motion" / v.video_id, res, shown,
                       alpha, overlays / temporal.kind / "motion" / v.video_id);
    }
    progress("attributed " + std::to_string(motion.size()) + " moving sequences");
  }
  write_consistency_csv(reports / "consistency.csv", consistency);
  {
    double iou = 0.0, rpi = 0.0;
    std::size_t n = 0;
    for (const auto& c : consistency)
      if (c.video_id.rfind("static_", 0) == 0) {
        iou += c.pairwise_iou;
        rpi += c.rpi;
        ++n;
      }
    checks.push_back({10, spatial.kind, "static_mean_pairwise_iou", n ? iou / n : 0.0, kMinStaticIou, false});
    checks.push_back({10, spatial.kind, "static_mean_rpi", n ? rpi / n : 1.0, kMaxStaticRpi, true});
  }

  std::stable_sort(checks.begin(), checks.end(), [](const Check& a, const Check& b) { return a.criterion < b.criterion; });
  CsvTable acceptance({"criterion", "model", "measure", "value", "threshold", "pass"});
  const Check* first_failure = nullptr;
  for (const auto& c : checks) {
    acceptance.add({std::to_string(c.criterion), c.model, c.measure, num(c.value),
                    std::string(c.at_most ? "<= " : ">= ") + num(c.threshold), c.pass() ? "1" : "0"});
    if (!c.pass() && !first_failure) first_failure = &c;
    if (ctx.log)
      *ctx.log << (c.pass() ? "PASS" : "FAIL") << " criterion " << c.criterion << " " << c.model << " " << c.measure
               << " = " << num(c.value) << " (" << (c.at_most ? "<= " : ">= ") << num(c.threshold) << ")\n";
  }
  acceptance.write(reports / "acceptance.csv");
  progress("reports written to " + reports.string());
  if (first_failure) {
    if (ctx.log)
      *ctx.log << "acceptance failure: criterion " << first_failure->criterion << " (" << first_failure->model << " "
               << first_failure->measure << " = " << num(first_failure->value) << ", required "
               << (first_failure->at_most ? "<= " : ">= ") << num(first_failure->threshold) << ")\n";
    return kExitAcceptance;
  }
  return kExitOk;
}

}  // namespace viba::app
