#include <fstream>
#include <sstream>

#include "viba/error.hpp"
#include "viba/iba/bottleneck.hpp"
#include "viba/strings.hpp"

namespace viba::iba {
namespace {

float parse_float(const std::string& s, const std::filesystem::path& path) {
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  float v = 0.0f;
  in >> v;
  if (!in || in.peek() != std::char_traits<char>::eof()) throw data_error("bad number '" + s + "' in " + path.string());
  return v;
}

}  // namespace

void write_stats(const std::filesystem::path& path, const ActivationStats& stats) {
  if (stats.mean.size() != stats.std.size()) throw invalid_argument("stats mean/std length mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out << "layer = " << stats.layer_id << "\nsamples = " << stats.sample_count << "\nchannel,mean,std\n";
  for (std::size_t c = 0; c < stats.mean.size(); ++c)
    out << c << ',' << format_double(stats.mean[c], 9) << ',' << format_double(stats.std[c], 9) << '\n';
  if (!out) throw io_error("write failed for " + path.string());
}

ActivationStats read_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  ActivationStats s;
  std::string line;
  auto expect_kv = [&](const std::string& key) {
    if (!std::getline(in, line)) throw data_error(path.string() + ": missing '" + key + "' line");
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)) != key) throw data_error(path.string() + ": expected '" + key + " = ...'");
    return std::string(trim(line.substr(eq + 1)));
  };
  s.layer_id = expect_kv("layer");
  const std::string samples = expect_kv("samples");
  try {
    s.sample_count = std::stoull(samples);
  } catch (const std::exception&) {
    throw data_error(path.string() + ": bad sample count '" + samples + "'");
  }
  if (!std::getline(in, line) || trim(line) != "channel,mean,std") throw data_error(path.string() + ": missing table header");
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != 3 || cells[0] != std::to_string(s.mean.size())) throw data_error(path.string() + ": bad row '" + line + "'");
    s.mean.push_back(parse_float(cells[1], path));
    s.std.push_back(parse_float(cells[2], path));
  }
  if (s.mean.empty()) throw data_error(path.string() + ": no channels");
  return s;
}

}  // namespace viba::iba
