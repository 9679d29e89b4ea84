#include "viba/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "viba/error.hpp"
#include "viba/metrics/agreement.hpp"
#include "viba/rng.hpp"
#include "viba/strings.hpp"
#include "viba/video/pipeline.hpp"

namespace viba::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFaceCx = 0.5, kFaceCy = 0.5, kFaceRx = 0.32, kFaceRy = 0.42;

struct Wave {
  double kx, ky, phase, amplitude;
};

// Continuous procedural face: background, skin ellipse, eyes, brows and mouth
// plus low-frequency shading. Coordinates in pixels.
struct FaceModel {
  double size = 64;
  double bg[3], skin[3], lips[3];
  std::vector<Wave> shading;  // low frequency, all channels
  std::vector<Wave> texture;  // mid frequency, used by temporal samples

  static double ellipse(double u, double v, double cx, double cy, double rx, double ry) {
    const double a = (u - cx) / rx, b = (v - cy) / ry;
    return a * a + b * b;
  }

  double channel(double x, double y, int c) const {
    const double u = (x + 0.5) / size, v = (y + 0.5) / size;
    double val = bg[c];
    if (ellipse(u, v, kFaceCx, kFaceCy, kFaceRx, kFaceRy) < 1.0) {
      val = skin[c];
      if (ellipse(u, v, 0.38, 0.40, 0.07, 0.035) < 1.0 || ellipse(u, v, 0.62, 0.40, 0.07, 0.035) < 1.0) val = 40.0;
      if (ellipse(u, v, 0.38, 0.32, 0.09, 0.02) < 1.0 || ellipse(u, v, 0.62, 0.32, 0.09, 0.02) < 1.0) val = 70.0;
      if (ellipse(u, v, 0.5, 0.72, 0.12, 0.04) < 1.0) val = lips[c];
    }
    for (const Wave& w : shading) val += w.amplitude * std::sin(kTwoPi * (w.kx * x + w.ky * y) + w.phase);
    for (const Wave& w : texture) val += w.amplitude * std::sin(kTwoPi * (w.kx * x + w.ky * y) + w.phase);
    return val;
  }
};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255)); }

FaceModel random_face(std::mt19937_64& rng, double size, bool with_texture) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  FaceModel f;
  f.size = size;
  const double bg_level = 40.0 + 60.0 * u01(rng);
  for (int c = 0; c < 3; ++c) f.bg[c] = bg_level + 20.0 * (u01(rng) - 0.5);
  const double tone = 150.0 + 60.0 * u01(rng);
  f.skin[0] = tone;
  f.skin[1] = tone * 0.8;
  f.skin[2] = tone * 0.65;
  f.lips[0] = 160.0 + 40.0 * u01(rng);
  f.lips[1] = 70.0;
  f.lips[2] = 80.0;
  for (int i = 0; i < 3; ++i) {
    const double period = 24.0 + 24.0 * u01(rng), angle = kTwoPi * u01(rng);
    f.shading.push_back({std::cos(angle) / period, std::sin(angle) / period, kTwoPi * u01(rng), 6.0 + 4.0 * u01(rng)});
  }
  if (with_texture) {
    for (int i = 0; i < 6; ++i) {
      const double period = 5.0 + 7.0 * u01(rng), angle = kTwoPi * u01(rng);
      f.texture.push_back({std::cos(angle) / period, std::sin(angle) / period, kTwoPi * u01(rng), 22.0});
    }
  }
  return f;
}

struct Patch {
  std::size_t left = 0, top = 0, side = 0;
  bool contains(std::size_t x, std::size_t y) const { return x >= left && x < left + side && y >= top && y < top + side; }
};

Patch random_patch(std::mt19937_64& rng, const SynthConfig& cfg) {
  std::uniform_int_distribution<std::size_t> side_dist(cfg.patch_min, cfg.patch_max);
  Patch p;
  p.side = side_dist(rng);
  std::uniform_int_distribution<std::size_t> pos(0, cfg.image_size - p.side);
  p.left = pos(rng);
  p.top = pos(rng);
  return p;
}

void attach_patch(LabeledSample& s, const Patch& p, std::size_t size) {
  s.mask = metrics::BinaryMask(size, size);
  for (std::size_t y = p.top; y < p.top + p.side; ++y)
    for (std::size_t x = p.left; x < p.left + p.side; ++x) s.mask.set(x, y, true);
  const double cu = (static_cast<double>(p.left) + p.side / 2.0) / size;
  const double cv = (static_cast<double>(p.top) + p.side / 2.0) / size;
  s.region = template_region(cu, cv);
}

// Labels with exactly round(count * fake_fraction) fakes in a seeded order.
std::vector<int> balanced_labels(const SynthConfig& cfg, std::uint64_t stream) {
  const auto fakes = static_cast<std::size_t>(std::lround(cfg.fake_fraction * static_cast<double>(cfg.count)));
  std::vector<int> labels(cfg.count, kReal);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(fakes), kFake);
  std::mt19937_64 rng(derive_seed(cfg.seed, {stream, 0}));
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

std::string sample_id(std::size_t i) {
  std::string d = std::to_string(i);
  if (d.size() < 4) d.insert(0, 4 - d.size(), '0');
  return "s" + d;
}

LabeledSample spatial_sample(const SynthConfig& cfg, std::size_t index, int label) {
  std::mt19937_64 rng(derive_seed(cfg.seed, {1, index}));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const FaceModel face = random_face(rng, static_cast<double>(cfg.image_size), false);
  LabeledSample s;
  s.id = sample_id(index);
  s.label = label;
  Patch patch;
  double kx = 0, ky = 0, phase_x = 0, phase_y = 0;
  if (label == kFake) {
    patch = random_patch(rng, cfg);
    const double period = cfg.texture_period * (0.85 + 0.3 * u01(rng));
    kx = 1.0 / period;
    ky = 1.0 / period;
    phase_x = kTwoPi * u01(rng);
    phase_y = kTwoPi * u01(rng);
    attach_patch(s, patch, cfg.image_size);
  } else {
    s.mask = metrics::BinaryMask(cfg.image_size, cfg.image_size);
  }
  RgbImage img(cfg.image_size, cfg.image_size);
  std::uniform_real_distribution<double> noise(-cfg.pixel_noise, cfg.pixel_noise);
  for (std::size_t y = 0; y < cfg.image_size; ++y)
    for (std::size_t x = 0; x < cfg.image_size; ++x) {
      double tex = 0.0;
      if (label == kFake && patch.contains(x, y)) {
        tex = cfg.texture_amplitude * std::sin(kTwoPi * kx * static_cast<double>(x) + phase_x) *
              std::sin(kTwoPi * ky * static_cast<double>(y) + phase_y);
      }
      const double n = noise(rng);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = to_byte(face.channel(double(x), double(y), c) + tex + n);
    }
  s.frames.push_back(std::move(img));
  return s;
}

LabeledSample temporal_sample(const SynthConfig& cfg, std::size_t index, int label) {
  std::mt19937_64 rng(derive_seed(cfg.seed, {2, index}));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const FaceModel face = random_face(rng, static_cast<double>(cfg.image_size), true);
  LabeledSample s;
  s.id = sample_id(index);
  s.label = label;
  const double drift_mag = 0.5 + u01(rng), drift_angle = kTwoPi * u01(rng);
  s.drift_x = drift_mag * std::cos(drift_angle);
  s.drift_y = drift_mag * std::sin(drift_angle);
  Patch patch;
  if (label == kFake) {
    patch = random_patch(rng, cfg);
    attach_patch(s, patch, cfg.image_size);
  } else {
    s.mask = metrics::BinaryMask(cfg.image_size, cfg.image_size);
  }
  // Offset of the jittering region relative to the global drift; j_0 = 0.
  double jx = 0.0, jy = 0.0;
  for (std::size_t t = 0; t < cfg.sequence_length; ++t) {
    if (label == kFake && t > 0) {
      const double m = cfg.motion_magnitude * (0.5 + 0.5 * u01(rng)), a = kTwoPi * u01(rng);
      jx = m * std::cos(a);
      jy = m * std::sin(a);
    }
    const double dx = s.drift_x * static_cast<double>(t), dy = s.drift_y * static_cast<double>(t);
    RgbImage img(cfg.image_size, cfg.image_size);
    for (std::size_t y = 0; y < cfg.image_size; ++y)
      for (std::size_t x = 0; x < cfg.image_size; ++x) {
        const bool inside = label == kFake && patch.contains(x, y);
        const double sx = static_cast<double>(x) - dx - (inside ? jx : 0.0);
        const double sy = static_cast<double>(y) - dy - (inside ? jy : 0.0);
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = to_byte(face.channel(sx, sy, c));
      }
    s.frames.push_back(std::move(img));
  }
  return s;
}

}  // namespace

void SynthConfig::validate(bool temporal) const {
  if (image_size < 16) throw config_error("synth image size must be >= 16");
  if (patch_min < 1 || patch_min > patch_max) throw config_error("synth patch size range is empty");
  if (patch_max > image_size) throw config_error("synth patch does not fit inside the frame");
  if (temporal && sequence_length < 2) throw config_error("temporal samples need a sequence length >= 2");
  if (!temporal && sequence_length < 1) throw config_error("sequence length must be >= 1");
  if (!(fake_fraction >= 0.0 && fake_fraction <= 1.0)) throw config_error("fake fraction must lie in [0, 1]");
  if (!(texture_period >= 2.0)) throw config_error("texture period must be >= 2 pixels");
  if (!(motion_magnitude > 0.0)) throw config_error("motion magnitude must be > 0");
}

std::vector<LabeledSample> gen_spatial_dataset(const SynthConfig& config) {
  config.validate(false);
  const std::vector<int> labels = balanced_labels(config, 1);
  std::vector<LabeledSample> out(config.count);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(config.count); ++i) {
    out[i] = spatial_sample(config, static_cast<std::size_t>(i), labels[i]);
  }
  return out;
}

std::vector<LabeledSample> gen_temporal_dataset(const SynthConfig& config) {
  config.validate(true);
  const std::vector<int> labels = balanced_labels(config, 2);
  std::vector<LabeledSample> out(config.count);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(config.count); ++i) {
    out[i] = temporal_sample(config, static_cast<std::size_t>(i), labels[i]);
  }
  return out;
}

metrics::BinaryMask ground_truth_mask(const LabeledSample& sample) {
  if (sample.label != kFake) throw invalid_argument("sample " + sample.id + " is real and has no manipulated region");
  return sample.mask;
}

char template_region(double u, double v) {
  const double e = FaceModel::ellipse(u, v, kFaceCx, kFaceCy, kFaceRx, kFaceRy);
  if (e >= 0.81 && e <= 1.21) return 'E';
  if (e > 1.21) return (std::abs(u - 0.5) < 0.12 && v > 0.85) ? 'C' : 'O';
  if (v < 0.45) return 'B';
  if (v < 0.65) return 'N';
  if (v < 0.8) return std::abs(u - 0.5) < 0.15 ? 'L' : 'N';
  return 'C';
}

GrayImage region_taxonomy(std::size_t width, std::size_t height) {
  GrayImage img(width, height);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(width);
      const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(height);
      img.at(x, y) = metrics::region_pixel_value(template_region(u, v));
    }
  return img;
}

std::string label_name(int label) { return label == kFake ? "fake" : "real"; }

void write_dataset(const std::filesystem::path& dir, const std::vector<LabeledSample>& samples) {
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw io_error("cannot write " + (dir / "labels.csv").string());
  labels << "sample_id,label,region_code\n";
  for (const LabeledSample& s : samples) {
    labels << s.id << ',' << label_name(s.label) << ',';
    if (s.region) labels << s.region;
    labels << '\n';
    const auto sdir = dir / s.id;
    video::FrameSequence seq;
    seq.source_id = s.id;
    seq.frames = s.frames;
    std::vector<video::RoiBox> rois;
    for (std::size_t t = 0; t < s.frames.size(); ++t) {
      seq.frame_ids.push_back(t);
      rois.push_back(video::RoiBox{t, 0, 0, s.frames[t].width, s.frames[t].height});
    }
    video::write_frame_sequence(sdir, seq);
    video::write_roi_csv(sdir / "roi.csv", rois);
    write_pgm(sdir / "taxonomy.pgm", region_taxonomy(s.frames[0].width, s.frames[0].height));
    if (s.label == kFake) metrics::write_mask_pgm(sdir / "mask.pgm", s.mask);
  }
  if (!labels) throw io_error("write failed for " + (dir / "labels.csv").string());
}

std::vector<LabelRow> read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<LabelRow> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t(trim(line));
    if (t.empty() || (line_no == 1 && t.rfind("sample_id", 0) == 0)) continue;
    const auto f = split(t, ',');
    const std::string ctx = path.string() + ":" + std::to_string(line_no);
    if (f.size() != 3) throw data_error(ctx + ": expected sample_id,label,region_code");
    LabelRow row;
    row.sample_id = std::string(trim(f[0]));
    const std::string label(trim(f[1]));
    if (label == "fake" || label == "1") row.label = kFake;
    else if (label == "real" || label == "0") row.label = kReal;
    else throw data_error(ctx + ": unknown label '" + label + "'");
    const std::string code(trim(f[2]));
    if (!code.empty()) {
      if (code.size() != 1 || !metrics::is_region_code(code[0])) throw data_error(ctx + ": bad region code '" + code + "'");
      row.region = code[0];
    }
    out.push_back(row);
  }
  return out;
}

}  // namespace viba::synth
