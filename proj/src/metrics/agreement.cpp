#include "viba/metrics/agreement.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "viba/error.hpp"
#include "viba/strings.hpp"

namespace viba::metrics {
namespace {

std::size_t code_rank(char code) {
  return static_cast<std::size_t>(std::find(kRegionCodes.begin(), kRegionCodes.end(), code) - kRegionCodes.begin());
}

// Indices 0..5 sorted by score descending, ties by code order, positive scores only, at most 3.
std::vector<char> top3(const std::array<double, 6>& score) {
  std::array<std::size_t, 6> idx = {0, 1, 2, 3, 4, 5};
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<char> out;
  for (std::size_t i : idx)
    if (score[i] > 0.0 && out.size() < 3) out.push_back(kRegionCodes[i]);
  return out;
}

}  // namespace

bool is_region_code(char code) { return code_rank(code) < kRegionCodes.size(); }

std::uint8_t region_pixel_value(char code) {
  if (!is_region_code(code)) throw invalid_argument(std::string("unknown region code '") + code + "'");
  return static_cast<std::uint8_t>(code_rank(code) + 1);
}

char region_from_pixel(std::uint8_t value) {
  if (value == 0) return 0;
  if (value > kRegionCodes.size()) throw data_error("region pixel value " + std::to_string(value) + " outside 0..6");
  return kRegionCodes[value - 1];
}

double overlap_coefficient(const std::set<char>& a, const std::set<char>& b) {
  if (a.empty() || b.empty()) throw invalid_argument("overlap coefficient of an empty region set");
  std::size_t inter = 0;
  for (char c : a) inter += b.count(c);
  return static_cast<double>(inter) / static_cast<double>(std::min(a.size(), b.size()));
}

std::vector<AnnotationRecord> read_annotations_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<AnnotationRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t(trim(line));
    if (t.empty() || (line_no == 1 && t.rfind("video_id", 0) == 0)) continue;
    const auto f = split(t, ',');
    const std::string ctx = path.string() + ":" + std::to_string(line_no);
    if (f.size() != 3) throw data_error(ctx + ": expected video_id,annotator_id,region_code");
    const std::string code(trim(f[2]));
    if (code.size() != 1 || !is_region_code(code[0])) throw data_error(ctx + ": unknown region code '" + code + "'");
    out.push_back({std::string(trim(f[0])), std::string(trim(f[1])), code[0]});
  }
  return out;
}

void write_annotations_csv(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << "video_id,annotator_id,region_code\n";
  for (const auto& r : records) out << r.video_id << ',' << r.annotator_id << ',' << r.region << '\n';
}

GrayImage read_taxonomy_pgm(const std::filesystem::path& path) {
  GrayImage img = read_pgm(path);
  for (std::uint8_t v : img.pixels)
    if (v > kRegionCodes.size()) throw data_error(path.string() + ": region value " + std::to_string(v) + " outside 0..6");
  return img;
}

std::vector<char> model_regions(const Plane& mass, const GrayImage& taxonomy) {
  if (mass.width != taxonomy.width || mass.height != taxonomy.height) {
    throw data_error("taxonomy " + std::to_string(taxonomy.width) + "x" + std::to_string(taxonomy.height) +
                     " does not match map " + std::to_string(mass.width) + "x" + std::to_string(mass.height));
  }
  std::array<double, 6> score{};
  for (std::size_t i = 0; i < mass.values.size(); ++i) {
    const std::uint8_t v = taxonomy.pixels[i];
    if (v == 0) continue;
    if (v > 6) throw data_error("region value " + std::to_string(v) + " outside 0..6");
    score[v - 1] += mass.values[i];
  }
  return top3(score);
}

std::vector<char> human_regions(const std::vector<char>& annotations) {
  std::array<double, 6> score{};
  for (char c : annotations) score[region_pixel_value(c) - 1] += 1.0;
  return top3(score);
}

AgreementReport region_agreement(const std::vector<VideoRegionInput>& videos) {
  AgreementReport report;
  for (char c : kRegionCodes) report.frequencies.push_back({c, 0, 0, 0});
  if (videos.empty()) return report;
  for (const VideoRegionInput& v : videos) {
    if (v.taxonomy.pixels.empty()) throw data_error("missing region taxonomy for video " + v.video_id);
    if (v.annotations.empty()) throw data_error("no annotations for video " + v.video_id);
    VideoAgreement a;
    a.video_id = v.video_id;
    a.model_set = model_regions(v.mass, v.taxonomy);
    a.human_set = human_regions(v.annotations);
    const std::set<char> m(a.model_set.begin(), a.model_set.end()), h(a.human_set.begin(), a.human_set.end());
    std::size_t inter = 0;
    for (char c : m) inter += h.count(c);
    a.precision = m.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(m.size());
    a.recall = h.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(h.size());
    a.f1 = (a.precision + a.recall) > 0.0 ? 2.0 * a.precision * a.recall / (a.precision + a.recall) : 0.0;
    a.overlap = (m.empty() || h.empty()) ? 0.0 : overlap_coefficient(m, h);
    a.top1_match = !a.human_set.empty() && m.count(a.human_set.front()) > 0;
    for (char c : a.model_set) ++report.frequencies[code_rank(c)].model_top3;
    for (char c : a.human_set) ++report.frequencies[code_rank(c)].human_top3;
    for (char c : v.annotations) ++report.frequencies[code_rank(c)].human_votes;
    report.macro_f1 += a.f1;
    report.precision += a.precision;
    report.recall += a.recall;
    report.overlap += a.overlap;
    report.top1_rate += a.top1_match ? 1.0 : 0.0;
    report.videos.push_back(std::move(a));
  }
  const double n = static_cast<double>(videos.size());
  report.macro_f1 /= n;
  report.precision /= n;
  report.recall /= n;
  report.overlap /= n;
  report.top1_rate /= n;
  return report;
}

}  // namespace viba::metrics
