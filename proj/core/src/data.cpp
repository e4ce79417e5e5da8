#include "dcn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "dcn/error.hpp"
#include "dcn/viz.hpp"

namespace dcn {
namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarPlane;

LabeledDataset concat(std::vector<LabeledDataset> parts) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  LabeledDataset out;
  out.images = Tensor4(total, 3, kCifarSide, kCifarSide);
  out.class_count = 10;
  std::size_t at = 0;
  for (const auto& p : parts) {
    auto src = p.images.data();
    std::copy(src.begin(), src.end(), out.images.data().begin() + static_cast<std::ptrdiff_t>(at * 3 * kCifarPlane));
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    at += p.size();
  }
  return out;
}

}  // namespace

LabeledDataset LabeledDataset::head(std::size_t count) const {
  count = std::min(count, size());
  LabeledDataset out;
  out.images = Tensor4(count, images.c(), images.h(), images.w());
  const auto src = images.data();
  std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(count * images.c() * images.h() * images.w()),
            out.images.data().begin());
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(count));
  out.class_count = class_count;
  out.channel_means = channel_means;
  return out;
}

void LabeledDataset::validate() const {
  if (labels.size() != images.n()) throw InvalidInput("dataset: label count != image count");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= class_count) throw InvalidInput("dataset: label out of range");
  }
}

std::vector<double> channel_means(const Tensor4& images) {
  std::vector<double> means(images.c(), 0.0);
  if (images.n() == 0) return means;
  for (std::size_t c = 0; c < images.c(); ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < images.n(); ++n) {
      for (double v : images.plane(n, c)) sum += v;
    }
    means[c] = sum / static_cast<double>(images.n() * images.h() * images.w());
  }
  return means;
}

void center_with_train_means(LabeledDataset& train, LabeledDataset& test) {
  const auto means = channel_means(train.images);
  for (LabeledDataset* ds : {&train, &test}) {
    if (ds->images.c() != means.size()) throw InvalidInput("center: channel count differs between splits");
    for (std::size_t n = 0; n < ds->images.n(); ++n) {
      for (std::size_t c = 0; c < means.size(); ++c) {
        for (double& v : ds->images.plane(n, c)) v -= means[c];
      }
    }
    ds->channel_means = means;
  }
}

LabeledDataset read_cifar10_batch(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestError(file.string(), 0, "cannot open file");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw IngestError(file.string(), 0, "file is empty");
  if (bytes.size() % kCifarRecord != 0) {
    const std::size_t complete = bytes.size() / kCifarRecord;
    throw IngestError(file.string(), complete * kCifarRecord,
                      "truncated record (file size " + std::to_string(bytes.size()) + " is not a multiple of " +
                          std::to_string(kCifarRecord) + ")");
  }
  const std::size_t count = bytes.size() / kCifarRecord;
  LabeledDataset ds;
  ds.images = Tensor4(count, 3, kCifarSide, kCifarSide);
  ds.labels.resize(count);
  ds.class_count = 10;
  auto pixels = ds.images.data();
  for (std::size_t r = 0; r < count; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] > 9) throw IngestError(file.string(), r * kCifarRecord, "label byte " + std::to_string(rec[0]) + " > 9");
    ds.labels[r] = rec[0];
    for (std::size_t i = 0; i < 3 * kCifarPlane; ++i) pixels[r * 3 * kCifarPlane + i] = rec[1 + i] / 255.0;
  }
  return ds;
}

DatasetSplit load_cifar10(const std::filesystem::path& dir, std::size_t train_limit, std::size_t test_limit) {
  std::vector<LabeledDataset> parts;
  std::size_t loaded = 0;
  for (int b = 1; b <= 5; ++b) {
    if (train_limit > 0 && loaded >= train_limit) break;
    const auto file = dir / ("data_batch_" + std::to_string(b) + ".bin");
    parts.push_back(read_cifar10_batch(file));
    loaded += parts.back().size();
  }
  DatasetSplit split;
  split.train = concat(std::move(parts));
  if (train_limit > 0) split.train = split.train.head(train_limit);
  const auto test_file = dir / "test_batch.bin";
  split.test = read_cifar10_batch(test_file);
  if (test_limit > 0) split.test = split.test.head(test_limit);
  center_with_train_means(split.train, split.test);
  return split;
}

namespace {

// Signed-distance style membership tests in the shape's local frame, where
// the shape spans roughly [-1, 1]. Returns coverage in [0, 1] with a one
// pixel soft edge (`soft` is the edge width in local units).
double shape_coverage(std::size_t kind, double u, double v, double soft) {
  auto edge = [soft](double d) { return std::clamp(0.5 - d / soft, 0.0, 1.0); };
  const double r = std::hypot(u, v);
  switch (kind) {
    case 0:  // disk
      return edge(r - 1.0);
    case 1:  // square
      return edge(std::max(std::abs(u), std::abs(v)) - 0.85);
    case 2: {  // triangle (pointing up in the local frame)
      const double d = std::max({-v - 0.7, 0.866 * u + 0.5 * v - 0.45, -0.866 * u + 0.5 * v - 0.45});
      return edge(d);
    }
    case 3:  // plus / cross
      return edge(std::min(std::max(std::abs(u) - 0.3, std::abs(v) - 1.0), std::max(std::abs(u) - 1.0, std::abs(v) - 0.3)));
    case 4:  // ring
      return edge(std::abs(r - 0.75) - 0.25);
    case 5:  // horizontal bar
      return edge(std::max(std::abs(u) - 1.0, std::abs(v) - 0.3));
    case 6:  // diamond
      return edge((std::abs(u) + std::abs(v)) / std::numbers::sqrt2 - 0.75);
    default: {  // hollow square
      const double m = std::max(std::abs(u), std::abs(v));
      return edge(std::abs(m - 0.75) - 0.2);
    }
  }
}

}  // namespace

LabeledDataset synth_shapes(std::uint64_t seed, std::size_t count, std::size_t classes, std::size_t width,
                            std::size_t height) {
  if (classes < 1 || classes > 8) throw InvalidInput("synth_shapes: classes must be in [1, 8]");
  if (count < classes) throw InvalidInput("synth_shapes: count must be >= classes");
  if (width < 8 || height < 8) throw InvalidInput("synth_shapes: image too small");
  LabeledDataset ds;
  ds.images = Tensor4(count, 1, height, width);
  ds.labels.resize(count);
  ds.class_count = classes;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.03);
  const double side = static_cast<double>(std::min(width, height));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t kind = i % classes;
    ds.labels[i] = static_cast<int>(kind);
    const double scale = side * (0.18 + 0.14 * unit(rng));
    const double cx = scale + (static_cast<double>(width) - 2.0 * scale) * unit(rng);
    const double cy = scale + (static_cast<double>(height) - 2.0 * scale) * unit(rng);
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const double background = 0.2 + 0.2 * unit(rng);
    const double foreground = 0.65 + 0.3 * unit(rng);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    auto plane = ds.images.plane(i, 0);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dx = (static_cast<double>(x) - cx) / scale;
        const double dy = (static_cast<double>(y) - cy) / scale;
        const double u = ca * dx + sa * dy;
        const double v = -sa * dx + ca * dy;
        const double cover = shape_coverage(kind, u, v, 1.0 / scale);
        const double value = background + (foreground - background) * cover + noise(rng);
        plane[y * width + x] = std::clamp(value, 0.0, 1.0);
      }
    }
  }
  return ds;
}

void export_pgm_dataset(const LabeledDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "labels.csv");
  if (!index) throw IoError("cannot write " + (dir / "labels.csv").string());
  index << "file,label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::ostringstream name;
    name << "img_" << std::setw(5) << std::setfill('0') << i << ".pgm";
    Grid2 g(data.images.h(), data.images.w());
    const auto plane = data.images.plane(i, 0);
    std::copy(plane.begin(), plane.end(), g.values().begin());
    write_pgm(g, dir / name.str());
    index << name.str() << ',' << data.labels[i] << '\n';
  }
}

}  // namespace dcn
