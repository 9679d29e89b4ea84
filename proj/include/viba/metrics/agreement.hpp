#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "viba/image.hpp"

namespace viba::metrics {

// Region codes in their fixed tie-break order; pixel value = position + 1.
inline constexpr std::array<char, 6> kRegionCodes = {'L', 'E', 'B', 'N', 'O', 'C'};

bool is_region_code(char code);
std::uint8_t region_pixel_value(char code);  // 1..6
char region_from_pixel(std::uint8_t value);  // 0 for background

// |A and B| / min(|A|, |B|). Throws on an empty set.
double overlap_coefficient(const std::set<char>& a, const std::set<char>& b);

struct AnnotationRecord {
  std::string video_id;
  std::string annotator_id;
  char region = 'O';
};

std::vector<AnnotationRecord> read_annotations_csv(const std::filesystem::path& path);
void write_annotations_csv(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);

// Reads a region-taxonomy PGM, rejecting values above 6.
GrayImage read_taxonomy_pgm(const std::filesystem::path& path);

struct VideoRegionInput {
  std::string video_id;
  Plane mass;            // capacity accumulated over the video's frames
  GrayImage taxonomy;    // pixel codes 0..6
  std::vector<char> annotations;
};

// Top three regions by capacity mass (mass > 0 only), ties in code order.
std::vector<char> model_regions(const Plane& mass, const GrayImage& taxonomy);
// Top three annotated codes by frequency, ties in code order.
std::vector<char> human_regions(const std::vector<char>& annotations);

struct VideoAgreement {
  std::string video_id;
  std::vector<char> model_set;
  std::vector<char> human_set;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double overlap = 0.0;
  bool top1_match = false;
};

struct RegionFrequency {
  char region = 'O';
  std::size_t model_top3 = 0;  // videos with the region in the model set
  std::size_t human_top3 = 0;  // videos with the region in the human set
  std::size_t human_votes = 0; // raw annotation count
};

struct AgreementReport {
  std::vector<VideoAgreement> videos;
  double macro_f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double overlap = 0.0;
  double top1_rate = 0.0;
  std::vector<RegionFrequency> frequencies;  // in code order
};

// Per-video metrics averaged over videos. Overlap is 0 when either set is empty.
AgreementReport region_agreement(const std::vector<VideoRegionInput>& videos);

}  // namespace viba::metrics
