#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "viba/error.hpp"
#include "viba/flow/farneback.hpp"

namespace viba::flow {
namespace {

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  std::vector<std::uint8_t> buf = {'V', 'F', 'L', 'W'};
  put_u32(buf, static_cast<std::uint32_t>(flow.width));
  put_u32(buf, static_cast<std::uint32_t>(flow.height));
  for (float v : flow.data) put_u32(buf, std::bit_cast<std::uint32_t>(v));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw io_error("write failed for " + path.string());
}

FlowField read_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "VFLW", 4) != 0) throw data_error(path.string() + " is not a VFLW file");
  FlowField f(get_u32(buf.data() + 4), get_u32(buf.data() + 8));
  if (buf.size() != 12 + f.data.size() * 4) throw data_error("truncated flow file " + path.string());
  for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = std::bit_cast<float>(get_u32(buf.data() + 12 + 4 * i));
  return f;
}

}  // namespace viba::flow
