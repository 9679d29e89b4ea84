#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "viba/image.hpp"
#include "viba/tensor.hpp"

namespace viba::video {

struct FrameSequence {
  std::string source_id;
  std::vector<std::size_t> frame_ids;  // strictly increasing
  std::vector<RgbImage> frames;

  std::size_t size() const { return frames.size(); }
};

struct RoiBox {
  std::size_t frame_id = 0;
  std::size_t left = 0;
  std::size_t top = 0;
  std::size_t width = 0;
  std::size_t height = 0;
};

// Reads `frame_<n>.ppm` files (n zero padded) sorted by n. Throws on an empty
// directory, unreadable files, or frames whose size differs from the first.
FrameSequence load_frame_sequence(const std::filesystem::path& directory);

// Writes frames as frame_0000.ppm, frame_0001.ppm, ... using the sequence ids.
void write_frame_sequence(const std::filesystem::path& directory, const FrameSequence& seq);

std::string frame_file_name(std::size_t frame_id);

// Mean absolute luma difference in [0, 1].
double mean_abs_luma_diff(const RgbImage& a, const RgbImage& b);

// Returns positions (indices into the sequence) of keyframes. Frame 0 is always
// kept; frame i is kept when its luma difference from the last keyframe exceeds
// diff_threshold and it lies at least min_gap frames after it.
std::vector<std::size_t> extract_keyframes(const FrameSequence& seq, double diff_threshold, std::size_t min_gap);

RgbImage crop_resize(const RgbImage& frame, const RoiBox& roi, std::size_t width, std::size_t height);

// Centered square crop of side min(width, height).
RoiBox default_roi(std::size_t frame_id, std::size_t width, std::size_t height);

// `roi.csv` with header frame_id,left,top,width,height.
std::vector<RoiBox> read_roi_csv(const std::filesystem::path& path);
void write_roi_csv(const std::filesystem::path& path, const std::vector<RoiBox>& rois);

// ROI for every frame of `seq`: from `roi.csv` in `directory` when present,
// otherwise the centered default. Boxes are validated against the frame size.
std::vector<RoiBox> rois_for_sequence(const std::filesystem::path& directory, const FrameSequence& seq);

// (k, k + 1) position pairs in keyframe order; a keyframe without successor is
// dropped with a warning.
std::vector<std::pair<std::size_t, std::size_t>> make_flow_pairs(const FrameSequence& seq,
                                                                 const std::vector<std::size_t>& keyframes);

// 3 x H x W tensor with (v / 255 - 0.5) / 0.5 per channel.
Tensor normalize_for_model(const RgbImage& image);

}  // namespace viba::video
