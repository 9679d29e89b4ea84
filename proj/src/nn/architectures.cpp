#include "viba/nn/architectures.hpp"

#include "viba/error.hpp"

namespace viba::nn {
namespace {

void add_block(ModelSpec& spec, const std::string& name, std::size_t in, std::size_t out) {
  spec.layers.push_back({name + ".relu0", ReluLayer{}});
  spec.layers.push_back({name + ".sep1", SeparableConvLayer{in, out, 3}});
  spec.layers.push_back({name + ".bn2", BatchNormLayer{out}});
  spec.layers.push_back({name + ".relu3", ReluLayer{}});
  spec.layers.push_back({name + ".sep4", SeparableConvLayer{out, out, 3}});
  spec.layers.push_back({name + ".bn5", BatchNormLayer{out}});
  spec.layers.push_back({name, MaxPoolLayer{3, 2, 1}});
}

}  // namespace

ModelSpec toy_xception_spec() {
  ModelSpec spec;
  spec.name = kToyXception;
  spec.input_shape = {3, 64, 64};
  spec.layers.push_back({"conv1", ConvLayer{3, 8, 3, 2, 1}});
  spec.layers.push_back({"bn1", BatchNormLayer{8}});
  spec.layers.push_back({"relu1", ReluLayer{}});
  spec.layers.push_back({"conv2", ConvLayer{8, 16, 3, 1, 1}});
  spec.layers.push_back({"bn2", BatchNormLayer{16}});
  spec.layers.push_back({"relu2", ReluLayer{}});
  add_block(spec, "block1", 16, 16);
  add_block(spec, "block2", 16, 24);
  add_block(spec, "block3", 24, 32);
  spec.layers.push_back({"conv3", SeparableConvLayer{32, 32, 3}});
  spec.layers.push_back({"post_conv3", BatchNormLayer{32}});
  spec.layers.push_back({"relu3", ReluLayer{}});
  spec.layers.push_back({"flatten", FlattenLayer{}});
  spec.layers.push_back({"dropout", DropoutLayer{0.5f}});
  spec.layers.push_back({"last_linear", LinearLayer{32 * 4 * 4, 2}});
  spec.injection_points = {"block1", "block2", "block3", "post_conv3"};
  return spec;
}

ModelSpec toy_vgg_spec() {
  ModelSpec spec;
  spec.name = kToyVgg;
  spec.input_shape = {3, 64, 64};
  // Full-size widths 64,128,256,256,512,512,512,512 divided by 8.
  const std::size_t widths[] = {8, 16, 32, 32, 64, 64, 64, 64};
  const bool pool_after[] = {true, true, false, true, false, true, false, true};
  std::size_t index = 0;
  std::size_t in = 3;
  auto next_id = [&index] { return "layer" + std::to_string(index++); };
  for (std::size_t i = 0; i < 8; ++i) {
    spec.layers.push_back({next_id(), ConvLayer{in, widths[i], 3, 1, 1}});
    spec.layers.push_back({next_id(), BatchNormLayer{widths[i]}});
    spec.layers.push_back({next_id(), ReluLayer{}});
    if (pool_after[i]) spec.layers.push_back({next_id(), MaxPoolLayer{2, 2, 0}});
    in = widths[i];
  }
  spec.layers.push_back({"flatten", FlattenLayer{}});
  spec.layers.push_back({"dropout", DropoutLayer{0.5f}});
  spec.layers.push_back({"last_linear", LinearLayer{64 * 2 * 2, 2}});
  spec.injection_points = {"layer9", "layer12", "layer16"};
  return spec;
}

ModelSpec spec_by_name(const std::string& kind) {
  if (kind == kToyXception) return toy_xception_spec();
  if (kind == kToyVgg) return toy_vgg_spec();
  throw config_error("unknown model kind '" + kind + "' (expected toy-xception or toy-vgg)");
}

std::string default_injection_point(const std::string& kind) {
  if (kind == kToyXception) return "block2";
  if (kind == kToyVgg) return "layer9";
  throw config_error("unknown model kind '" + kind + "' (expected toy-xception or toy-vgg)");
}

std::vector<std::string> model_kinds() { return {kToyXception, kToyVgg}; }

}  // namespace viba::nn
