#pragma once

#include <string>
#include <vector>

#include "viba/nn/model.hpp"

namespace viba::nn {

inline constexpr const char* kToyXception = "toy-xception";
inline constexpr const char* kToyVgg = "toy-vgg";

// Reduced Xception: entry convs, three separable-conv blocks (16, 24, 32
// channels) each ending in a 3x3/2 max-pool, a separable conv + batch norm,
// then dropout and a 2-way linear head. Input 3x64x64.
// Injection points: block1, block2, block3, post_conv3.
ModelSpec toy_xception_spec();

// VGG11 layout with channel widths divided by 8; layers are named layer0 ..
// layer28 after their position in the full-size stack. Input 3x64x64.
// Injection points: layer9, layer12, layer16.
ModelSpec toy_vgg_spec();

// Looks up one of the two specs above by name; throws a config error otherwise.
ModelSpec spec_by_name(const std::string& kind);

// Default bottleneck layer: block2 for toy-xception, layer9 for toy-vgg.
std::string default_injection_point(const std::string& kind);

std::vector<std::string> model_kinds();

}  // namespace viba::nn
