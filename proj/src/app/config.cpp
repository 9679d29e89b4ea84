#include "viba/app/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "viba/error.hpp"
#include "viba/nn/architectures.hpp"
#include "viba/strings.hpp"

namespace viba::app {
namespace {

enum class Kind { kInteger, kReal, kText };

struct KeySpec {
  const char* name;
  const char* fallback;
  Kind kind;
};

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      {"seed", "7", Kind::kInteger},
      // synthetic data
      {"synth.image_size", "64", Kind::kInteger},
      {"synth.sequence_length", "2", Kind::kInteger},
      {"synth.patch_min", "14", Kind::kInteger},
      {"synth.patch_max", "22", Kind::kInteger},
      {"synth.texture_period", "3", Kind::kReal},
      {"synth.texture_amplitude", "70", Kind::kReal},
      {"synth.pixel_noise", "3", Kind::kReal},
      {"synth.motion_magnitude", "2", Kind::kReal},
      {"synth.fake_fraction", "0.5", Kind::kReal},
      {"synth.count", "200", Kind::kInteger},
      // end-to-end run sizes
      {"e2e.spatial_train_count", "200", Kind::kInteger},
      {"e2e.temporal_train_count", "400", Kind::kInteger},
      {"e2e.eval_count", "100", Kind::kInteger},
      {"e2e.static_videos", "10", Kind::kInteger},
      {"e2e.static_length", "8", Kind::kInteger},
      {"e2e.motion_videos", "6", Kind::kInteger},
      {"e2e.motion_length", "6", Kind::kInteger},
      {"e2e.annotators", "3", Kind::kInteger},
      // training
      {"train.learning_rate", "0.001", Kind::kReal},
      {"train.batch_size", "16", Kind::kInteger},
      {"train.max_epochs", "30", Kind::kInteger},
      {"train.patience", "7", Kind::kInteger},
      {"train.validation_fraction", "0.15", Kind::kReal},
      // bottleneck
      {"iba.layer.toy-xception", "block2", Kind::kText},
      {"iba.layer.toy-vgg", "layer9", Kind::kText},
      {"iba.beta", "10", Kind::kReal},
      {"iba.steps", "10", Kind::kInteger},
      {"iba.step_size", "1", Kind::kReal},
      {"iba.noise_samples", "10", Kind::kInteger},
      {"iba.sigma_floor", "0.1", Kind::kReal},
      {"iba.initial_alpha", "5", Kind::kReal},
      {"iba.calibration", "real", Kind::kText},
      // optical flow
      {"flow.scale", "0.5", Kind::kReal},
      {"flow.levels", "3", Kind::kInteger},
      {"flow.window", "15", Kind::kInteger},
      {"flow.iterations", "3", Kind::kInteger},
      {"flow.poly_n", "5", Kind::kInteger},
      {"flow.poly_sigma", "1.1", Kind::kReal},
      // frame pipeline
      {"video.input_size", "64", Kind::kInteger},
      {"video.keyframe_threshold", "0.02", Kind::kReal},
      {"video.keyframe_min_gap", "1", Kind::kInteger},
      // metrics and overlays
      {"metrics.quantile", "0.85", Kind::kReal},
      {"metrics.ece_bins", "10", Kind::kInteger},
      {"overlay.alpha", "0.5", Kind::kReal},
  };
  return table;
}

const KeySpec* find_key(const std::string& key) {
  for (const KeySpec& k : key_table())
    if (key == k.name) return &k;
  return nullptr;
}

std::string valid_key_list() {
  std::string out;
  for (const KeySpec& k : key_table()) {
    if (!out.empty()) out += ", ";
    out += k.name;
  }
  return out;
}

bool parse_integer(const std::string& s, std::uint64_t& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  in >> out;
  return in && in.peek() == std::char_traits<char>::eof() && std::isfinite(out);
}

}  // namespace

RunConfig::RunConfig() {
  for (const KeySpec& k : key_table()) values_[k.name] = k.fallback;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const KeySpec& k : key_table()) out.emplace_back(k.name);
  return out;
}

bool RunConfig::has_key(const std::string& key) { return find_key(key) != nullptr; }

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw config_error("unknown config key '" + key + "'; valid keys: " + valid_key_list());
  const std::string v(trim(value));
  if (spec->kind == Kind::kInteger) {
    std::uint64_t parsed = 0;
    if (!parse_integer(v, parsed)) throw config_error("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  } else if (spec->kind == Kind::kReal) {
    double parsed = 0.0;
    if (!parse_real(v, parsed)) throw config_error("config key '" + key + "' expects a number, got '" + v + "'");
  } else if (key == "iba.calibration" && v != "real" && v != "all") {
    throw config_error("iba.calibration must be 'real' or 'all', got '" + v + "'");
  }
  values_[key] = v;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw config_error("unknown config key '" + key + "'; valid keys: " + valid_key_list());
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  double v = 0.0;
  if (!parse_real(get(key), v)) throw config_error("config key '" + key + "' is not numeric");
  return v;
}

std::uint64_t RunConfig::integer(const std::string& key) const {
  std::uint64_t v = 0;
  if (!parse_integer(get(key), v)) throw config_error("config key '" + key + "' is not an integer");
  return v;
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw config_error(origin + ":" + std::to_string(number) + ": expected 'key = value', got '" + std::string(body) + "'");
    }
    set(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  load_text(buf.str(), path.string());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const KeySpec& k : key_table()) out += std::string(k.name) + " = " + values_.at(k.name) + "\n";
  return out;
}

void RunConfig::echo_to(const std::filesystem::path& dir) const {
  const auto path = dir / "run_config.txt";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out << to_text();
  if (!out) throw io_error("write failed for " + path.string());
}

synth::SynthConfig RunConfig::synth(std::size_t count, std::uint64_t seed) const {
  synth::SynthConfig c;
  c.image_size = integer("synth.image_size");
  c.sequence_length = integer("synth.sequence_length");
  c.patch_min = integer("synth.patch_min");
  c.patch_max = integer("synth.patch_max");
  c.texture_period = real("synth.texture_period");
  c.texture_amplitude = real("synth.texture_amplitude");
  c.pixel_noise = real("synth.pixel_noise");
  c.motion_magnitude = real("synth.motion_magnitude");
  c.fake_fraction = real("synth.fake_fraction");
  c.count = count;
  c.seed = seed;
  return c;
}

nn::TrainConfig RunConfig::train() const {
  nn::TrainConfig c;
  c.learning_rate = static_cast<float>(real("train.learning_rate"));
  c.batch_size = integer("train.batch_size");
  c.max_epochs = integer("train.max_epochs");
  c.patience = integer("train.patience");
  c.seed = seed();
  c.validate();
  return c;
}

iba::BottleneckConfig RunConfig::bottleneck(const std::string& model_kind) const {
  iba::BottleneckConfig c;
  c.layer = get("iba.layer." + model_kind);
  c.beta = real("iba.beta");
  c.steps = integer("iba.steps");
  c.step_size = real("iba.step_size");
  c.noise_samples = integer("iba.noise_samples");
  c.sigma_floor = static_cast<float>(real("iba.sigma_floor"));
  c.initial_alpha = static_cast<float>(real("iba.initial_alpha"));
  c.seed = seed();
  c.validate();
  return c;
}

flow::PyramidConfig RunConfig::flow() const {
  flow::PyramidConfig c;
  c.scale = real("flow.scale");
  c.levels = integer("flow.levels");
  c.window = integer("flow.window");
  c.iterations = integer("flow.iterations");
  c.poly_n = integer("flow.poly_n");
  c.poly_sigma = real("flow.poly_sigma");
  c.validate();
  return c;
}

}  // namespace viba::app
