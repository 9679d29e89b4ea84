#include "viba/nn/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "viba/error.hpp"

namespace viba::nn {
namespace {

constexpr char kMagic[4] = {'V', 'W', 'T', 'S'};
constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void name(const std::string& s) {
    if (s.size() > 0xFFFF) throw invalid_argument("name too long for weights file: " + s);
    u16(static_cast<std::uint16_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  const std::vector<std::uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::vector<std::uint8_t> bytes, std::string source) : buf_(std::move(bytes)), source_(std::move(source)) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    const auto* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string name() {
    const std::uint16_t len = u16();
    const auto* p = take(len);
    return std::string(reinterpret_cast<const char*>(p), len);
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (buf_.size() - pos_ < n) throw data_error("truncated weights file " + source_);
    const std::uint8_t* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::vector<std::uint8_t> buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_weights(const Model& model, const std::filesystem::path& path) {
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kVersion);
  const auto& layers = model.params().layers();
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const LayerParams& lp : layers) {
    w.name(lp.layer_id);
    w.u8(static_cast<std::uint8_t>(lp.tensors.size()));
    for (const NamedTensor& t : lp.tensors) {
      w.name(t.name);
      w.u8(static_cast<std::uint8_t>(t.value.rank()));
      for (std::size_t d : t.value.shape()) w.u32(static_cast<std::uint32_t>(d));
      for (float v : t.value.data()) w.f32(v);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write weights to " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw io_error("write failed for " + path.string());
}

ParameterStore read_parameter_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open weights file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kMagic, 4) != 0) throw data_error(path.string() + " is not a VWTS weights file");
  const std::uint16_t version = r.u16();
  if (version != kVersion) {
    throw data_error(path.string() + ": unsupported weights version " + std::to_string(version));
  }
  ParameterStore store;
  const std::uint32_t layer_count = r.u32();
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    LayerParams lp;
    lp.layer_id = r.name();
    const std::uint8_t tensor_count = r.u8();
    for (std::uint8_t t = 0; t < tensor_count; ++t) {
      NamedTensor nt;
      nt.name = r.name();
      const std::uint8_t rank = r.u8();
      Shape shape(rank);
      for (auto& d : shape) d = r.u32();
      std::vector<float> data(shape_numel(shape));
      for (float& v : data) v = r.f32();
      nt.value = Tensor(std::move(shape), std::move(data));
      lp.tensors.push_back(std::move(nt));
    }
    store.layers().push_back(std::move(lp));
  }
  if (!r.at_end()) throw data_error(path.string() + ": trailing bytes after last layer");
  return store;
}

Model load_weights(const ModelSpec& spec, const std::filesystem::path& path) {
  return Model::from_params(spec, read_parameter_store(path));
}

}  // namespace viba::nn
