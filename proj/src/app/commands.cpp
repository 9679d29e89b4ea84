#include "viba/app/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "viba/app/reports.hpp"
#include "viba/error.hpp"
#include "viba/flow/farneback.hpp"
#include "viba/iba/attribution.hpp"
#include "viba/log.hpp"
#include "viba/metrics/masks.hpp"
#include "viba/nn/architectures.hpp"
#include "viba/nn/weights_io.hpp"
#include "viba/strings.hpp"
#include "viba/synth/synth.hpp"
#include "viba/video/pipeline.hpp"

namespace fs = std::filesystem;

namespace viba::app {
namespace {

std::ostream& log_of(const Context& ctx) {
  static std::ofstream null_stream;
  return ctx.log ? *ctx.log : null_stream;
}

void require_model_kind(const std::string& kind) {
  const auto kinds = nn::model_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    std::string list;
    for (const auto& k : kinds) list += (list.empty() ? "" : ", ") + k;
    throw config_error("unknown model kind '" + kind + "'; valid kinds: " + list);
  }
}

void require_injection_point(const nn::ModelSpec& spec, const std::string& layer) {
  const auto& pts = spec.injection_points;
  if (std::find(pts.begin(), pts.end(), layer) != pts.end()) return;
  std::string list;
  for (const auto& p : pts) list += (list.empty() ? "" : ", ") + p;
  throw config_error("unknown layer '" + layer + "' for " + spec.name + "; valid injection points: " + list);
}

bool is_temporal(const std::string& model_kind) { return model_kind == nn::kToyVgg; }

nn::Dataset to_examples(const std::vector<DatasetSample>& samples, const std::string& kind,
                        const flow::PyramidConfig& flow_cfg) {
  const std::size_t needed = is_temporal(kind) ? 2 : 1;
  for (const auto& s : samples)
    if (s.frames.size() < needed) throw data_error("sample " + s.id + " has too few frames for " + kind);
  nn::Dataset out(samples.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i)
    out[i] = nn::Example{sample_input(kind, samples[i].frames, flow_cfg), samples[i].label};
  return out;
}

// Inputs to attribute for one frame directory: single frames for the spatial
// model, flow-colour images of keyframe pairs for the temporal one.
struct AttributionInputs {
  std::vector<std::size_t> frame_ids;
  std::vector<RgbImage> shown;  // frame the overlay is drawn on
  std::vector<Tensor> tensors;
};

AttributionInputs attribution_inputs(const Context& ctx, const fs::path& frames_dir, const std::string& kind) {
  const video::FrameSequence seq = video::load_frame_sequence(frames_dir);
  const auto rois = video::rois_for_sequence(frames_dir, seq);
  const std::size_t size = ctx.config.integer("video.input_size");
  std::vector<RgbImage> crops;
  for (std::size_t i = 0; i < seq.size(); ++i) crops.push_back(video::crop_resize(seq.frames[i], rois[i], size, size));
  AttributionInputs in;
  if (!is_temporal(kind)) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      in.frame_ids.push_back(seq.frame_ids[i]);
      in.shown.push_back(crops[i]);
      in.tensors.push_back(video::normalize_for_model(crops[i]));
    }
    return in;
  }
  const auto keys = video::extract_keyframes(seq, ctx.config.real("video.keyframe_threshold"),
                                             ctx.config.integer("video.keyframe_min_gap"));
  const auto pairs = video::make_flow_pairs(seq, keys);
  if (pairs.empty()) throw data_error(frames_dir.string() + ": the temporal model needs at least one frame pair");
  const auto flow_cfg = ctx.config.flow();
  for (const auto& [a, b] : pairs) {
    in.frame_ids.push_back(seq.frame_ids[a]);
    in.shown.push_back(crops[a]);
    in.tensors.push_back(video::normalize_for_model(flow_color_image(crops[a], crops[b], flow_cfg)));
  }
  return in;
}

void write_attribution_set(const Context& ctx, const fs::path& dir, const AttributionInputs& in,
                           const std::vector<iba::FrameAttribution>& results) {
  make_dir(dir);
  const double alpha = ctx.config.real("overlay.alpha");
  CsvTable predictions({"frame_id", "class", "probability"});
  for (std::size_t i = 0; i < results.size(); ++i) {
    const std::string stem = video::frame_file_name(in.frame_ids[i]);
    const std::string base = stem.substr(0, stem.size() - 4);
    iba::write_capacity(dir / (base + ".vcap"), results[i].map);
    iba::export_capacity_pgm(dir / (base + ".pgm"), results[i].map.map);
    write_ppm(dir / ("overlay_" + base.substr(6) + ".ppm"), iba::overlay_heatmap(in.shown[i], results[i].map.map, alpha));
    predictions.add({std::to_string(in.frame_ids[i]), synth::label_name(results[i].predicted), num(results[i].probability)});
  }
  predictions.write(dir / "predictions.csv");
  ctx.config.echo_to(dir);
}

std::vector<fs::path> vcap_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".vcap") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::kIo:
        return kExitIo;
      case ErrorKind::kConfig:
      case ErrorKind::kInvalidArgument:
        return kExitConfig;
      case ErrorKind::kData:
      case ErrorKind::kNumeric:
        return kExitData;
    }
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<DatasetSample> load_dataset(const fs::path& dir, std::size_t input_size) {
  const auto rows = synth::read_labels_csv(dir / "labels.csv");
  if (rows.empty()) throw data_error(dir.string() + ": labels.csv lists no samples");
  std::vector<DatasetSample> out;
  for (const auto& row : rows) {
    const fs::path sdir = dir / row.sample_id;
    const video::FrameSequence seq = video::load_frame_sequence(sdir);
    const auto rois = video::rois_for_sequence(sdir, seq);
    DatasetSample s;
    s.id = row.sample_id;
    s.label = row.label;
    s.region = row.region;
    for (std::size_t i = 0; i < seq.size(); ++i)
      s.frames.push_back(video::crop_resize(seq.frames[i], rois[i], input_size, input_size));
    out.push_back(std::move(s));
  }
  return out;
}

RgbImage flow_color_image(const RgbImage& a, const RgbImage& b, const flow::PyramidConfig& config) {
  return flow::flow_to_color(flow::farneback_flow(to_luma(a), to_luma(b), config));
}

Tensor sample_input(const std::string& model_kind, const std::vector<RgbImage>& frames,
                    const flow::PyramidConfig& config) {
  if (frames.empty()) throw data_error("sample has no frames");
  if (!is_temporal(model_kind)) return video::normalize_for_model(frames[0]);
  if (frames.size() < 2) throw data_error("the temporal model needs two frames per sample");
  return video::normalize_for_model(flow_color_image(frames[0], frames[1], config));
}

std::size_t validation_split_point(std::size_t n, double validation_fraction) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw config_error("train.validation_fraction must lie in (0, 1)");
  const auto val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  if (val == 0 || val >= n) throw data_error("cannot split " + std::to_string(n) + " samples into train and validation");
  return n - val;
}

int cmd_synth(const Context& ctx, const std::string& kind, std::optional<std::size_t> count) {
  if (kind != "spatial" && kind != "temporal") throw config_error("synth kind must be 'spatial' or 'temporal', got '" + kind + "'");
  const auto cfg = ctx.config.synth(count.value_or(ctx.config.integer("synth.count")), ctx.config.seed());
  const auto samples = kind == "spatial" ? synth::gen_spatial_dataset(cfg) : synth::gen_temporal_dataset(cfg);
  make_dir(ctx.out);
  synth::write_dataset(ctx.out, samples);
  ctx.config.echo_to(ctx.out);
  log_of(ctx) << "wrote " << samples.size() << " " << kind << " samples to " << ctx.out.string() << "\n";
  return kExitOk;
}

int cmd_train(const Context& ctx, const fs::path& data_dir, const std::string& model_kind) {
  require_model_kind(model_kind);
  const auto tc = ctx.config.train();
  const auto samples = load_dataset(data_dir, ctx.config.integer("video.input_size"));
  const nn::Dataset all = to_examples(samples, model_kind, ctx.config.flow());
  const std::size_t split = validation_split_point(all.size(), ctx.config.real("train.validation_fraction"));
  const nn::Dataset train(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(split));
  const nn::Dataset val(all.begin() + static_cast<std::ptrdiff_t>(split), all.end());
  nn::Model model = nn::Model::build(nn::spec_by_name(model_kind), ctx.config.seed());
  const auto result = nn::train_model(model, train, val, tc);
  make_dir(ctx.out);
  nn::save_weights(model, ctx.out / "weights.vwts");
  CsvTable hist({"epoch", "train_loss", "validation_loss", "validation_accuracy", "best"});
  for (const auto& h : result.history)
    hist.add({std::to_string(h.epoch), num(h.train_loss), num(h.validation_loss), num(h.validation_accuracy),
              h.epoch == result.best_epoch ? "1" : "0"});
  hist.write(ctx.out / "history.csv");
  ctx.config.echo_to(ctx.out);
  log_of(ctx) << model_kind << ": " << result.history.size() << " epochs, best epoch " << result.best_epoch << "\n";
  return kExitOk;
}

int cmd_stats(const Context& ctx, const fs::path& data_dir, const fs::path& weights, const std::string& model_kind,
              const std::string& layer) {
  require_model_kind(model_kind);
  const auto spec = nn::spec_by_name(model_kind);
  const std::string at = layer.empty() ? ctx.config.get("iba.layer." + model_kind) : layer;
  require_injection_point(spec, at);
  const nn::Model model = nn::load_weights(spec, weights);
  const auto samples = load_dataset(data_dir, ctx.config.integer("video.input_size"));
  const bool real_only = ctx.config.get("iba.calibration") == "real";
  std::vector<DatasetSample> chosen;
  for (const auto& s : samples)
    if (!real_only || s.label == synth::kReal) chosen.push_back(s);
  if (chosen.empty()) throw data_error(data_dir.string() + ": no calibration samples");
  const nn::Dataset ex = to_examples(chosen, model_kind, ctx.config.flow());
  std::vector<Tensor> frames;
  for (const auto& e : ex) frames.push_back(e.input);
  const auto stats = iba::estimate_stats(model, at, frames, static_cast<float>(ctx.config.real("iba.sigma_floor")));
  make_dir(ctx.out);
  iba::write_stats(ctx.out / ("stats_" + at + ".txt"), stats);
  ctx.config.echo_to(ctx.out);
  log_of(ctx) << "stats at " << at << " from " << frames.size() << " frames\n";
  return kExitOk;
}

int cmd_attribute(const Context& ctx, const AttributeOptions& options) {
  require_model_kind(options.model_kind);
  const auto spec = nn::spec_by_name(options.model_kind);
  std::vector<std::string> layers = options.sweep;
  if (layers.empty()) layers.push_back(options.layer.empty() ? ctx.config.get("iba.layer." + options.model_kind) : options.layer);
  for (const auto& l : layers) require_injection_point(spec, l);

  const nn::Model model = nn::load_weights(spec, options.weights);
  const AttributionInputs in = attribution_inputs(ctx, options.frames_dir, options.model_kind);
  std::optional<iba::ActivationStats> given;
  if (!options.stats.empty()) given = iba::read_stats(options.stats);

  make_dir(ctx.out);
  for (const auto& layer : layers) {
    iba::BottleneckConfig bc = ctx.config.bottleneck(options.model_kind);
    bc.layer = layer;
    iba::ActivationStats stats;
    if (given && given->layer_id == layer) {
      stats = *given;
    } else {
      if (given) warn("stats file is for layer '" + given->layer_id + "'; estimating '" + layer + "' from the input frames");
      stats = iba::estimate_stats(model, layer, in.tensors, bc.sigma_floor);
    }
    const auto results = iba::attribute_sequence(model, in.tensors, in.frame_ids, bc, stats, ctx.workers);
    write_attribution_set(ctx, options.sweep.empty() ? ctx.out : ctx.out / layer, in, results);
    log_of(ctx) << "attributed " << results.size() << " inputs at " << layer << "\n";
  }
  ctx.config.echo_to(ctx.out);
  return kExitOk;
}

int cmd_flow(const Context& ctx, const fs::path& frames_dir) {
  const video::FrameSequence seq = video::load_frame_sequence(frames_dir);
  const auto rois = video::rois_for_sequence(frames_dir, seq);
  const std::size_t size = ctx.config.integer("video.input_size");
  const auto keys = video::extract_keyframes(seq, ctx.config.real("video.keyframe_threshold"),
                                             ctx.config.integer("video.keyframe_min_gap"));
  const auto pairs = video::make_flow_pairs(seq, keys);
  const auto flow_cfg = ctx.config.flow();
  make_dir(ctx.out);
  CsvTable listing({"frame_id", "next_frame_id"});
  for (const auto& [a, b] : pairs) {
    const auto fa = video::crop_resize(seq.frames[a], rois[a], size, size);
    const auto fb = video::crop_resize(seq.frames[b], rois[b], size, size);
    const auto f = flow::farneback_flow(to_luma(fa), to_luma(fb), flow_cfg);
    const std::string stem = video::frame_file_name(seq.frame_ids[a]);
    const std::string base = stem.substr(0, stem.size() - 4);
    flow::write_flow(ctx.out / (base + ".vflw"), f);
    write_ppm(ctx.out / ("flow_" + base.substr(6) + ".ppm"), flow::flow_to_color(f));
    listing.add({std::to_string(seq.frame_ids[a]), std::to_string(seq.frame_ids[b])});
  }
  listing.write(ctx.out / "pairs.csv");
  ctx.config.echo_to(ctx.out);
  log_of(ctx) << pairs.size() << " flow pairs from " << keys.size() << " keyframes\n";
  return kExitOk;
}

int cmd_metrics(const Context& ctx, const MetricsOptions& options) {
  if (!fs::is_directory(options.maps_dir)) throw io_error(options.maps_dir.string() + " is not a directory");
  // Videos: subdirectories holding .vcap files, or the maps dir itself.
  std::vector<std::pair<std::string, fs::path>> video_dirs;
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(options.maps_dir))
    if (e.is_directory()) subdirs.push_back(e.path());
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& d : subdirs)
    if (!vcap_files(d).empty()) video_dirs.emplace_back(d.filename().string(), d);
  if (video_dirs.empty() && !vcap_files(options.maps_dir).empty())
    video_dirs.emplace_back(fs::weakly_canonical(options.maps_dir).filename().string(), options.maps_dir);
  if (video_dirs.empty()) throw data_error(options.maps_dir.string() + " contains no capacity maps (.vcap)");

  std::map<std::string, synth::LabelRow> labels;
  if (!options.labels.empty())
    for (const auto& r : synth::read_labels_csv(options.labels)) labels[r.sample_id] = r;

  const double q = ctx.config.real("metrics.quantile");
  std::vector<ConsistencyRow> consistency;
  std::vector<metrics::VideoRegionInput> regions;
  std::map<std::string, std::vector<char>> votes;
  if (!options.annotations.empty())
    for (const auto& a : metrics::read_annotations_csv(options.annotations)) votes[a.video_id].push_back(a.region);

  std::vector<double> conf;
  std::vector<int> pred, truth;
  CsvTable localization({"video_id", "region_area_fraction", "mass_fraction", "ratio"});

  for (const auto& [video_id, dir] : video_dirs) {
    VideoMaps v;
    v.video_id = video_id;
    const auto lab = labels.find(video_id);
    if (lab != labels.end()) v.label = synth::label_name(lab->second.label);
    const auto files = vcap_files(dir);
    for (const auto& f : files) {
      v.maps.push_back(iba::read_capacity(f).map);
      const Plane& first = v.maps.front();
      if (v.maps.back().width != first.width || v.maps.back().height != first.height) {
        throw data_error("map size mismatch: " + files.front().string() + " is " + std::to_string(first.width) + "x" +
                         std::to_string(first.height) + ", " + f.string() + " is " + std::to_string(v.maps.back().width) +
                         "x" + std::to_string(v.maps.back().height));
      }
    }
    consistency.push_back(consistency_of("maps", v, q));

    Plane mass(v.maps.front().width, v.maps.front().height);
    for (const Plane& m : v.maps)
      for (std::size_t i = 0; i < m.values.size(); ++i) mass.values[i] += m.values[i];

    if (!options.annotations.empty() && votes.count(video_id)) {
      metrics::VideoRegionInput r;
      r.video_id = video_id;
      r.mass = mass;
      const fs::path tax = options.taxonomy_dir / video_id / "taxonomy.pgm";
      if (!options.taxonomy_dir.empty() && fs::exists(tax)) {
        r.taxonomy = metrics::read_taxonomy_pgm(tax);
        if (r.taxonomy.width != mass.width || r.taxonomy.height != mass.height)
          throw data_error("taxonomy " + tax.string() + " does not match the maps in " + dir.string());
      } else {
        r.taxonomy = synth::region_taxonomy(mass.width, mass.height);
      }
      r.annotations = votes[video_id];
      regions.push_back(std::move(r));
    }

    if (!options.masks_dir.empty()) {
      const fs::path mpath = options.masks_dir / video_id / "mask.pgm";
      if (fs::exists(mpath)) {
        const auto mask = metrics::read_mask_pgm(mpath);
        if (mask.width != mass.width || mask.height != mass.height)
          throw data_error("mask " + mpath.string() + " does not match the maps in " + dir.string());
        double inside = 0.0, total = 0.0;
        for (std::size_t i = 0; i < mass.values.size(); ++i) {
          total += mass.values[i];
          if (mask.bits[i]) inside += mass.values[i];
        }
        const double area = static_cast<double>(mask.count()) / static_cast<double>(mask.bits.size());
        const double frac = total > 0.0 ? inside / total : 0.0;
        localization.add({video_id, num(area), num(frac), num(area > 0.0 ? frac / area : 0.0)});
      }
    }

    if (lab != labels.end() && fs::exists(dir / "predictions.csv")) {
      std::ifstream in(dir / "predictions.csv");
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line), ',');
        if (cells.size() != 3) throw data_error(dir.string() + "/predictions.csv: bad row '" + line + "'");
        const int p = cells[1] == "fake" ? 1 : 0;
        if (cells[1] != "fake" && cells[1] != "real") throw data_error(dir.string() + "/predictions.csv: bad class '" + cells[1] + "'");
        conf.push_back(std::stod(cells[2]));
        pred.push_back(p);
        truth.push_back(lab->second.label);
      }
    }
  }

  make_dir(ctx.out);
  write_consistency_csv(ctx.out / "consistency.csv", consistency);
  std::vector<std::pair<std::string, metrics::AgreementReport>> agreement;
  if (!regions.empty()) agreement.emplace_back("maps", metrics::region_agreement(regions));
  write_agreement_csv(ctx.out / "agreement.csv", agreement);
  write_region_frequency_csv(ctx.out / "region_frequency.csv", agreement);
  std::vector<CalibrationRow> calib;
  if (!conf.empty()) {
    CalibrationRow row;
    row.model = "maps";
    row.condition = "baseline";
    row.samples = conf.size();
    row.bins = ctx.config.integer("metrics.ece_bins");
    row.report = metrics::classification_report(pred, truth);
    row.ece = metrics::ece(conf, pred, truth, row.bins);
    calib.push_back(row);
  }
  write_calibration_csv(ctx.out / "calibration.csv", calib);
  write_classification_csv(ctx.out / "classification.csv", calib);
  if (localization.rows()) localization.write(ctx.out / "localization.csv");
  ctx.config.echo_to(ctx.out);
  log_of(ctx) << video_dirs.size() << " videos measured\n";
  return kExitOk;
}

}  // namespace viba::app
