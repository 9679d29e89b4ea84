#include "viba/video/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "viba/error.hpp"
#include "viba/log.hpp"

namespace viba::video {
namespace {

bool parse_frame_name(const std::string& name, std::size_t& id) {
  constexpr std::string_view prefix = "frame_", suffix = ".ppm";
  if (name.size() <= prefix.size() + suffix.size()) return false;
  if (name.compare(0, prefix.size(), prefix) != 0) return false;
  if (name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) return false;
  const char* first = name.data() + prefix.size();
  const char* last = name.data() + name.size() - suffix.size();
  if (!std::all_of(first, last, [](char c) { return c >= '0' && c <= '9'; })) return false;
  return std::from_chars(first, last, id).ec == std::errc();
}

std::size_t parse_size(const std::string& field, const std::string& context) {
  std::size_t v = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw data_error(context + ": expected a non-negative integer, got '" + field + "'");
  }
  return v;
}

void check_roi(const RoiBox& roi, std::size_t width, std::size_t height) {
  if (roi.width == 0 || roi.height == 0 || roi.left + roi.width > width || roi.top + roi.height > height) {
    throw data_error("roi for frame " + std::to_string(roi.frame_id) + " (" + std::to_string(roi.left) + "," +
                     std::to_string(roi.top) + " " + std::to_string(roi.width) + "x" + std::to_string(roi.height) +
                     ") is outside the " + std::to_string(width) + "x" + std::to_string(height) + " frame");
  }
}

}  // namespace

std::string frame_file_name(std::size_t frame_id) {
  std::string digits = std::to_string(frame_id);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return "frame_" + digits + ".ppm";
}

FrameSequence load_frame_sequence(const std::filesystem::path& directory) {
  std::error_code ec;
  if (!std::filesystem::is_directory(directory, ec)) throw io_error("not a directory: " + directory.string());
  std::map<std::size_t, std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    std::size_t id = 0;
    if (entry.is_regular_file() && parse_frame_name(entry.path().filename().string(), id)) {
      if (!files.emplace(id, entry.path()).second) throw data_error("duplicate frame id " + std::to_string(id) + " in " + directory.string());
    }
  }
  if (files.empty()) throw data_error("no frames (frame_<n>.ppm) in " + directory.string());
  FrameSequence seq;
  seq.source_id = directory.filename().string();
  for (const auto& [id, path] : files) {
    RgbImage img = read_ppm(path);
    if (!seq.frames.empty() && (img.width != seq.frames[0].width || img.height != seq.frames[0].height)) {
      throw data_error("frame " + path.filename().string() + " is " + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + " but the sequence uses non-uniform dims " +
                       std::to_string(seq.frames[0].width) + "x" + std::to_string(seq.frames[0].height));
    }
    seq.frame_ids.push_back(id);
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

void write_frame_sequence(const std::filesystem::path& directory, const FrameSequence& seq) {
  std::filesystem::create_directories(directory);
  for (std::size_t i = 0; i < seq.size(); ++i) write_ppm(directory / frame_file_name(seq.frame_ids[i]), seq.frames[i]);
}

double mean_abs_luma_diff(const RgbImage& a, const RgbImage& b) {
  if (a.width != b.width || a.height != b.height) throw invalid_argument("luma diff: frame sizes differ");
  const Plane la = to_luma(a), lb = to_luma(b);
  double s = 0.0;
  for (std::size_t i = 0; i < la.values.size(); ++i) s += std::abs(static_cast<double>(la.values[i]) - lb.values[i]);
  return la.values.empty() ? 0.0 : s / static_cast<double>(la.values.size());
}

std::vector<std::size_t> extract_keyframes(const FrameSequence& seq, double diff_threshold, std::size_t min_gap) {
  if (seq.frames.empty()) throw invalid_argument("extract_keyframes: empty sequence");
  if (!(diff_threshold >= 0.0)) throw invalid_argument("extract_keyframes: threshold must be >= 0");
  std::vector<std::size_t> keys = {0};
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const std::size_t last = keys.back();
    if (i - last >= min_gap && mean_abs_luma_diff(seq.frames[last], seq.frames[i]) > diff_threshold) keys.push_back(i);
  }
  return keys;
}

RgbImage crop_resize(const RgbImage& frame, const RoiBox& roi, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw invalid_argument("crop_resize: target size must be positive");
  check_roi(roi, frame.width, frame.height);
  RgbImage crop(roi.width, roi.height);
  for (std::size_t y = 0; y < roi.height; ++y) {
    const auto* src = &frame.pixels[((roi.top + y) * frame.width + roi.left) * 3];
    std::copy(src, src + roi.width * 3, &crop.pixels[y * roi.width * 3]);
  }
  return resize_bilinear(crop, width, height);
}

RoiBox default_roi(std::size_t frame_id, std::size_t width, std::size_t height) {
  const std::size_t side = std::min(width, height);
  return RoiBox{frame_id, (width - side) / 2, (height - side) / 2, side, side};
}

std::vector<RoiBox> read_roi_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<RoiBox> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line.rfind("frame_id", 0) == 0)) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    const std::string ctx = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 5) throw data_error(ctx + ": expected 5 fields");
    out.push_back(RoiBox{parse_size(fields[0], ctx), parse_size(fields[1], ctx), parse_size(fields[2], ctx),
                         parse_size(fields[3], ctx), parse_size(fields[4], ctx)});
  }
  return out;
}

void write_roi_csv(const std::filesystem::path& path, const std::vector<RoiBox>& rois) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << "frame_id,left,top,width,height\n";
  for (const RoiBox& r : rois) out << r.frame_id << ',' << r.left << ',' << r.top << ',' << r.width << ',' << r.height << '\n';
}

std::vector<RoiBox> rois_for_sequence(const std::filesystem::path& directory, const FrameSequence& seq) {
  std::map<std::size_t, RoiBox> by_id;
  const auto csv = directory / "roi.csv";
  if (std::filesystem::exists(csv)) {
    for (const RoiBox& r : read_roi_csv(csv)) by_id[r.frame_id] = r;
  }
  std::vector<RoiBox> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto it = by_id.find(seq.frame_ids[i]);
    RoiBox r = it != by_id.end() ? it->second : default_roi(seq.frame_ids[i], seq.frames[i].width, seq.frames[i].height);
    check_roi(r, seq.frames[i].width, seq.frames[i].height);
    out.push_back(r);
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> make_flow_pairs(const FrameSequence& seq,
                                                                 const std::vector<std::size_t>& keyframes) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t k : keyframes) {
    if (k + 1 >= seq.size()) {
      warn("keyframe " + std::to_string(k) + " has no successor frame; dropped from flow pairs");
      continue;
    }
    pairs.emplace_back(k, k + 1);
  }
  return pairs;
}

Tensor normalize_for_model(const RgbImage& image) {
  const std::size_t w = image.width, h = image.height;
  Tensor t(Shape{3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        t[(c * h + y) * w + x] = (static_cast<float>(image.at(x, y, c)) / 255.0f - 0.5f) / 0.5f;
  return t;
}

}  // namespace viba::video
