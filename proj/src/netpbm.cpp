#include <cctype>
#include <fstream>
#include <string>

#include "viba/error.hpp"
#include "viba/image.hpp"

namespace viba {
namespace {

// Reads one header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw data_error("truncated netpbm header in " + path.string());
  return tok;
}

std::size_t parse_dim(const std::string& tok, const std::filesystem::path& path) {
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size() || v == 0) throw data_error("bad netpbm header value '" + tok + "' in " + path.string());
  return v;
}

std::vector<std::uint8_t> read_netpbm(const std::filesystem::path& path, const char* magic, std::size_t channels,
                                      std::size_t& width, std::size_t& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  if (next_token(in, path) != magic) throw data_error(path.string() + " is not a binary " + magic + " file");
  width = parse_dim(next_token(in, path), path);
  height = parse_dim(next_token(in, path), path);
  if (parse_dim(next_token(in, path), path) != 255) throw data_error(path.string() + ": only maxval 255 is supported");
  std::vector<std::uint8_t> pixels(width * height * channels);
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != pixels.size()) throw data_error("truncated pixel data in " + path.string());
  return pixels;
}

void write_netpbm(const std::filesystem::path& path, const char* magic, std::size_t width, std::size_t height,
                  const std::vector<std::uint8_t>& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out << magic << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw io_error("write failed for " + path.string());
}

}  // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
  RgbImage img;
  img.pixels = read_netpbm(path, "P6", 3, img.width, img.height);
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  write_netpbm(path, "P6", image.width, image.height, image.pixels);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  GrayImage img;
  img.pixels = read_netpbm(path, "P5", 1, img.width, img.height);
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  write_netpbm(path, "P5", image.width, image.height, image.pixels);
}

}  // namespace viba
