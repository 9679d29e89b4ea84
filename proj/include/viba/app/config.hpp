#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "viba/flow/farneback.hpp"
#include "viba/iba/bottleneck.hpp"
#include "viba/nn/train.hpp"
#include "viba/synth/synth.hpp"

namespace viba::app {

// Flat key = value settings covering every tunable default of the pipeline.
// Keys are fixed; values are validated when set.
class RunConfig {
 public:
  RunConfig();

  // All keys in echo order.
  static std::vector<std::string> keys();
  static bool has_key(const std::string& key);

  // Throws config_error for unknown keys (listing the valid ones) or values of
  // the wrong type.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  double real(const std::string& key) const;
  std::uint64_t integer(const std::string& key) const;

  // `key = value` lines; blank lines and `#` comments are skipped.
  void load_text(const std::string& text, const std::string& origin = "config");
  void load_file(const std::filesystem::path& path);

  // Every key, one `key = value` line each.
  std::string to_text() const;
  // Writes <dir>/run_config.txt.
  void echo_to(const std::filesystem::path& dir) const;

  std::uint64_t seed() const { return integer("seed"); }

  synth::SynthConfig synth(std::size_t count, std::uint64_t seed) const;
  nn::TrainConfig train() const;
  iba::BottleneckConfig bottleneck(const std::string& model_kind) const;
  flow::PyramidConfig flow() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace viba::app
