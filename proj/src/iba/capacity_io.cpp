#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "viba/error.hpp"
#include "viba/iba/attribution.hpp"
#include "viba/strings.hpp"

namespace viba::iba {
namespace {

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

void write_capacity(const std::filesystem::path& path, const CapacityMap& map) {
  std::vector<std::uint8_t> buf = {'V', 'C', 'A', 'P'};
  put_u32(buf, static_cast<std::uint32_t>(map.map.width));
  put_u32(buf, static_cast<std::uint32_t>(map.map.height));
  put_u64(buf, std::bit_cast<std::uint64_t>(map.total_bits));
  for (float v : map.map.values) put_u32(buf, std::bit_cast<std::uint32_t>(v));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw io_error("write failed for " + path.string());
}

CapacityMap read_capacity(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 20 || std::memcmp(buf.data(), "VCAP", 4) != 0) throw data_error(path.string() + " is not a VCAP file");
  CapacityMap out;
  const auto w = static_cast<std::size_t>(get_le(buf.data() + 4, 4));
  const auto h = static_cast<std::size_t>(get_le(buf.data() + 8, 4));
  out.total_bits = std::bit_cast<double>(get_le(buf.data() + 12, 8));
  if (buf.size() != 20 + w * h * 4) throw data_error("truncated capacity file " + path.string());
  out.map = Plane(w, h);
  for (std::size_t i = 0; i < w * h; ++i) {
    out.map.values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(buf.data() + 20 + 4 * i, 4)));
  }
  return out;
}

void export_capacity_pgm(const std::filesystem::path& path, const Plane& map) {
  float lo = 0.0f, hi = 0.0f;
  if (!map.values.empty()) {
    const auto [a, b] = std::minmax_element(map.values.begin(), map.values.end());
    lo = *a;
    hi = *b;
  }
  GrayImage img(map.width, map.height);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const double t = hi > lo ? (static_cast<double>(map.values[i]) - lo) / (static_cast<double>(hi) - lo) : 0.0;
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
  }
  write_pgm(path, img);
  auto meta_path = path;
  meta_path.replace_extension(".meta");
  std::ofstream meta(meta_path);
  if (!meta) throw io_error("cannot write " + meta_path.string());
  meta << "min = " << format_double(lo, 9) << "\nmax = " << format_double(hi, 9) << "\n";
}

}  // namespace viba::iba
