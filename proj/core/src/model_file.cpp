#include "dcn/model_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dcn/error.hpp"

namespace dcn {
namespace {

constexpr char kMagic[8] = {'D', 'C', 'N', 'M', 'O', 'D', 'E', 'L'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  void u32(std::uint32_t v) { raw(to_little(v)); }
  void u64(std::uint64_t v) { raw(to_little(v)); }
  void f64(double v) { raw(to_little(std::bit_cast<std::uint64_t>(v))); }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  template <typename T>
  void raw(T v) {
    bytes(&v, sizeof(T));
  }
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string name) : data_(std::move(data)), name_(std::move(name)) {}

  std::uint32_t u32() { return to_little(raw<std::uint32_t>()); }
  std::uint64_t u64() { return to_little(raw<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(to_little(raw<std::uint64_t>())); }
  std::string text(std::size_t n) {
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void expect(std::uint64_t got, std::uint64_t want, const char* what) {
    if (got != want) {
      throw IoError(name_ + ": " + what + " is " + std::to_string(got) + ", config implies " + std::to_string(want));
    }
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) throw IoError(name_ + ": truncated at byte " + std::to_string(pos_));
  }
  template <typename T>
  T raw() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<char> data_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const Network& network, const ModelMetadata& meta, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kModelFormatVersion);
  w.u64(meta.seed);
  w.u64(meta.iterations);
  const std::string config = network.config().to_text();
  w.u64(config.size());
  w.bytes(config.data(), config.size());
  for (const auto& layer : network.layers()) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, CompConvLayer>) {
            const auto& bank = l.bank;
            w.u64(bank.features());
            w.u64(bank.channels());
            w.u64(bank.geometry().width);
            w.u64(bank.geometry().height);
            const auto offsets = bank.offsets();
            for (std::size_t g = 0; g < bank.group_count(); ++g) w.u64(offsets[g + 1] - offsets[g]);
            for (const auto& c : bank.components()) {
              w.f64(c.weight);
              w.f64(c.mean.x);
              w.f64(c.mean.y);
              w.f64(c.sigma);
            }
            for (double b : bank.bias()) w.f64(b);
          } else if constexpr (std::is_same_v<T, DenseConvLayer>) {
            w.u64(l.bank.features);
            w.u64(l.bank.channels);
            w.u64(l.bank.kh);
            w.u64(l.bank.kw);
            for (double v : l.bank.weights) w.f64(v);
            for (double v : l.bank.bias) w.f64(v);
          } else if constexpr (std::is_same_v<T, FullyConnectedLayer>) {
            w.u64(l.outputs);
            w.u64(l.inputs);
            for (double v : l.weights) w.f64(v);
            for (double v : l.bias) w.f64(v);
          }
        },
        layer);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing model " + path.string());
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path.string());
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());

  const std::string magic = r.text(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) throw IoError(path.string() + ": not a model file");
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw UnsupportedVersion(path.string() + ": unsupported model format version " + std::to_string(version) +
                             " (this build reads version " + std::to_string(kModelFormatVersion) + ")");
  }
  LoadedModel model;
  model.meta.seed = r.u64();
  model.meta.iterations = r.u64();
  const std::uint64_t config_len = r.u64();
  NetworkConfig config = NetworkConfig::parse(r.text(config_len));
  model.network = Network(std::move(config), model.meta.seed);

  for (auto& layer : model.network.layers()) {
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, CompConvLayer>) {
            const std::size_t features = l.bank.features();
            const std::size_t channels = l.bank.channels();
            r.expect(r.u64(), features, "features");
            r.expect(r.u64(), channels, "channels");
            r.expect(r.u64(), l.bank.geometry().width, "kernel width");
            r.expect(r.u64(), l.bank.geometry().height, "kernel height");
            std::vector<std::uint64_t> sizes(features * channels);
            for (auto& s : sizes) s = r.u64();
            std::vector<std::vector<GaussianComponent>> groups(sizes.size());
            for (std::size_t g = 0; g < sizes.size(); ++g) {
              groups[g].resize(sizes[g]);
              for (auto& c : groups[g]) {
                c.weight = r.f64();
                c.mean.x = r.f64();
                c.mean.y = r.f64();
                c.sigma = r.f64();
              }
            }
            std::vector<double> bias(features);
            for (double& b : bias) b = r.f64();
            l.bank = CompFilterBank(features, channels, l.bank.geometry(), std::move(groups), std::move(bias));
          } else if constexpr (std::is_same_v<T, DenseConvLayer>) {
            r.expect(r.u64(), l.bank.features, "features");
            r.expect(r.u64(), l.bank.channels, "channels");
            r.expect(r.u64(), l.bank.kh, "kernel height");
            r.expect(r.u64(), l.bank.kw, "kernel width");
            for (double& v : l.bank.weights) v = r.f64();
            for (double& v : l.bank.bias) v = r.f64();
          } else if constexpr (std::is_same_v<T, FullyConnectedLayer>) {
            r.expect(r.u64(), l.outputs, "outputs");
            r.expect(r.u64(), l.inputs, "inputs");
            for (double& v : l.weights) v = r.f64();
            for (double& v : l.bias) v = r.f64();
          }
        },
        layer);
  }
  if (!r.at_end()) throw IoError(path.string() + ": trailing bytes after parameters at " + std::to_string(r.pos()));
  return model;
}

}  // namespace dcn
