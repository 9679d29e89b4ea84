#pragma once

#include <filesystem>

#include "viba/nn/model.hpp"

namespace viba::nn {

// Binary weights file, all integers and floats little-endian:
//   "VWTS", u16 version (1), u32 layer count,
//   per layer: u16 name length, name bytes, u8 tensor count,
//   per tensor: u16 name length, name bytes, u8 rank, rank x u32 dims, f32 data.
void save_weights(const Model& model, const std::filesystem::path& path);

// Reads a weights file and checks it against `spec`. Any error (truncation,
// bad magic or version, mismatching layer or shape) throws; nothing partial
// is returned.
Model load_weights(const ModelSpec& spec, const std::filesystem::path& path);

ParameterStore read_parameter_store(const std::filesystem::path& path);

}  // namespace viba::nn
