#include "dcn/viz.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "dcn/error.hpp"
#include "dcn/maxflow.hpp"

namespace dcn {
namespace {

struct Walker {
  const std::vector<Layer>& layers;
  std::size_t lowest_comp;  // network index of the first compositional layer
  std::vector<ReconGaussian>& out;

  // `pos` is in the output coordinates of layers[index].
  void expand(std::size_t index, std::size_t channel, Vec2 pos, double var, double weight, std::size_t depth) {
    const Layer& layer = layers[index];
    if (const auto* comp = std::get_if<CompConvLayer>(&layer)) {
      const bool first = index == lowest_comp;
      for (std::size_t s = 0; s < comp->bank.channels(); ++s) {
        for (const auto& c : comp->bank.group(channel, s)) {
          if (!first && !(c.weight > 0.0)) continue;
          const Vec2 child{pos.x + c.mean.x, pos.y + c.mean.y};
          const double child_var = var + c.sigma * c.sigma;
          const double child_weight = weight * std::abs(c.weight);
          if (first) {
            out.push_back({to_pixels(index, child), child_var, child_weight, c.weight < 0.0 ? -1 : 1, depth + 1});
          } else {
            descend(index, s, child, child_var, child_weight, depth + 1);
          }
        }
      }
      return;
    }
    if (const auto* pool = std::get_if<MaxPoolLayer>(&layer)) {
      const double stride = static_cast<double>(pool->stride);
      const double offset = (static_cast<double>(pool->window) - 1.0) / 2.0;
      descend(index, channel, {stride * pos.x + offset, stride * pos.y + offset}, var, weight, depth);
      return;
    }
    if (std::holds_alternative<ReluLayer>(layer)) {
      descend(index, channel, pos, var, weight, depth);
      return;
    }
    throw InvalidInput("mean reconstruction only supports compositional, relu and pooling layers below the feature");
  }

  // Maps a position in the input coordinates of layers[index] through any
  // pooling layers below it.
  Vec2 to_pixels(std::size_t index, Vec2 pos) const {
    for (std::size_t i = index; i-- > 0;) {
      if (const auto* pool = std::get_if<MaxPoolLayer>(&layers[i])) {
        const double offset = (static_cast<double>(pool->window) - 1.0) / 2.0;
        const double stride = static_cast<double>(pool->stride);
        pos = {stride * pos.x + offset, stride * pos.y + offset};
      }
    }
    return pos;
  }

  void descend(std::size_t index, std::size_t channel, Vec2 pos, double var, double weight, std::size_t depth) {
    if (index == 0) throw InvalidInput("mean reconstruction: ran out of layers");
    expand(index - 1, channel, pos, var, weight, depth);
  }
};

// Position of the receptive-field center: the same walk with every mean at
// its kernel center.
Vec2 receptive_center(const std::vector<Layer>& layers, std::size_t top) {
  Vec2 p{0.0, 0.0};
  for (std::size_t i = top + 1; i-- > 0;) {
    if (const auto* comp = std::get_if<CompConvLayer>(&layers[i])) {
      const Vec2 c = comp->bank.geometry().center();
      p = {p.x + c.x, p.y + c.y};
    } else if (const auto* pool = std::get_if<MaxPoolLayer>(&layers[i])) {
      const double offset = (static_cast<double>(pool->window) - 1.0) / 2.0;
      const double stride = static_cast<double>(pool->stride);
      p = {stride * p.x + offset, stride * p.y + offset};
    }
  }
  return p;
}

}  // namespace

std::vector<ReconGaussian> mean_reconstruct(const Network& network, std::size_t layer, std::size_t feature) {
  const auto comp_layers = network.comp_layer_indices();
  if (layer < 1 || layer > comp_layers.size()) {
    throw InvalidInput("mean_reconstruct: layer " + std::to_string(layer) + " not in [1, " +
                       std::to_string(comp_layers.size()) + "]");
  }
  const std::size_t top = comp_layers[layer - 1];
  const auto& bank = std::get<CompConvLayer>(network.layers()[top]).bank;
  if (feature >= bank.features()) {
    throw InvalidInput("mean_reconstruct: feature " + std::to_string(feature) + " not in [0, " +
                       std::to_string(bank.features()) + ")");
  }
  for (std::size_t i = 0; i < comp_layers.front(); ++i) {
    if (!std::holds_alternative<ReluLayer>(network.layers()[i]) &&
        !std::holds_alternative<MaxPoolLayer>(network.layers()[i])) {
      throw InvalidInput("mean_reconstruct: the first convolution must be compositional");
    }
  }

  std::vector<ReconGaussian> out;
  Walker walker{network.layers(), comp_layers.front(), out};
  walker.expand(top, feature, {0.0, 0.0}, 0.0, 1.0, 0);
  const Vec2 center = receptive_center(network.layers(), top);
  for (auto& r : out) r.pos = {r.pos.x - center.x, r.pos.y - center.y};
  return out;
}

DistributionMap render_distribution_maps(std::span<const ReconGaussian> recons, std::size_t width,
                                         std::size_t height, Vec2 origin) {
  if (width == 0 || height == 0) throw InvalidInput("render_distribution_maps: dims must be positive");
  DistributionMap maps{Grid2(height, width), Grid2(height, width)};
  for (const auto& r : recons) {
    if (!(r.var > 0.0)) throw InvalidInput("render_distribution_maps: variance must be > 0");
    Grid2& target = r.sign < 0 ? maps.neg : maps.pos;
    const double cx = origin.x + r.pos.x;
    const double cy = origin.y + r.pos.y;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        target(y, x) += r.weight * std::exp(-(dx * dx + dy * dy) / (2.0 * r.var));
      }
    }
  }
  return maps;
}

GraphCutResult graphcut_boundary(const DistributionMap& maps) {
  const std::size_t h = maps.pos.rows();
  const std::size_t w = maps.pos.cols();
  if (maps.neg.rows() != h || maps.neg.cols() != w) throw InvalidInput("graphcut_boundary: maps differ in size");
  const std::size_t pixels = h * w;
  const std::size_t source = pixels;
  const std::size_t sink = pixels + 1;
  auto diff = [&](std::size_t y, std::size_t x) { return maps.pos(y, x) - maps.neg(y, x); };

  MaxFlow graph(pixels + 2);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      if (maps.neg(y, x) > 0.0) graph.add_edge(source, p, maps.neg(y, x));
      if (maps.pos(y, x) > 0.0) graph.add_edge(p, sink, maps.pos(y, x));
      if (x + 1 < w) {
        const double d = diff(y, x) - diff(y, x + 1);
        graph.add_edge(p, p + 1, d * d, d * d);
      }
      if (y + 1 < h) {
        const double d = diff(y, x) - diff(y + 1, x);
        graph.add_edge(p, p + w, d * d, d * d);
      }
    }
  }
  GraphCutResult result;
  result.flow = graph.solve(source, sink);
  const auto source_side = graph.source_side();
  result.sink_side.resize(pixels);
  for (std::size_t p = 0; p < pixels; ++p) result.sink_side[p] = source_side[p] ? 0 : 1;

  result.boundary = Grid2(h, w);
  const int dy[4] = {-1, 1, 0, 0};
  const int dx[4] = {0, 0, -1, 1};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!result.sink_side[y * w + x]) continue;
      double strength = 0.0;
      for (int k = 0; k < 4; ++k) {
        const auto ny = static_cast<std::ptrdiff_t>(y) + dy[k];
        const auto nx = static_cast<std::ptrdiff_t>(x) + dx[k];
        if (ny < 0 || nx < 0 || ny >= static_cast<std::ptrdiff_t>(h) || nx >= static_cast<std::ptrdiff_t>(w)) continue;
        const auto q = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
        if (result.sink_side[q]) continue;
        strength = std::max(strength, std::abs(diff(y, x) - diff(static_cast<std::size_t>(ny), static_cast<std::size_t>(nx))));
      }
      result.boundary(y, x) = strength;
    }
  }
  return result;
}

Grid2 upscale_nearest(const Grid2& grid, std::size_t factor) {
  if (factor < 1) throw InvalidInput("upscale_nearest: factor must be >= 1");
  Grid2 out(grid.rows() * factor, grid.cols() * factor);
  for (std::size_t y = 0; y < out.rows(); ++y) {
    for (std::size_t x = 0; x < out.cols(); ++x) out(y, x) = grid(y / factor, x / factor);
  }
  return out;
}

void write_pgm(const Grid2& grid, const std::filesystem::path& path) {
  const auto values = grid.values();
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidInput("write_pgm: grid has non-finite values");
  }
  double lo = 0.0, hi = 0.0;
  if (!values.empty()) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
  }
  std::vector<unsigned char> pixels(values.size(), 128);
  if (hi > lo) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      pixels[i] = static_cast<unsigned char>(std::lround(255.0 * (values[i] - lo) / (hi - lo)));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << grid.cols() << ' ' << grid.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  PgmImage img;
  int maxval = 0;
  in >> magic >> img.width >> img.height >> maxval;
  if (!in || magic != "P5" || maxval != 255) throw IoError(path.string() + ": not an 8-bit binary PGM");
  in.get();  // single whitespace after the header
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw IoError(path.string() + ": truncated");
  return img;
}

FeatureVisualization visualize_feature(const Network& network, std::size_t layer, std::size_t feature,
                                       const std::filesystem::path& dir) {
  FeatureVisualization v;
  v.recons = mean_reconstruct(network, layer, feature);
  const std::size_t width = network.config().width;
  const std::size_t height = network.config().height;
  const Vec2 origin{(static_cast<double>(width) - 1.0) / 2.0, (static_cast<double>(height) - 1.0) / 2.0};
  v.maps = render_distribution_maps(v.recons, width, height, origin);

  double peak = 0.0;
  for (double x : v.maps.pos.values()) peak = std::max(peak, x);
  for (double x : v.maps.neg.values()) peak = std::max(peak, x);
  DistributionMap normalized = v.maps;
  if (peak > 0.0) {
    for (double& x : normalized.pos.values()) x /= peak;
    for (double& x : normalized.neg.values()) x /= peak;
  }
  v.cut = graphcut_boundary(normalized);

  Grid2 blobs(height, width);
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    blobs.values()[i] = normalized.pos.values()[i] - normalized.neg.values()[i];
  }
  std::filesystem::create_directories(dir);
  const std::string stem = "layer" + std::to_string(layer) + "_feature" + std::to_string(feature);
  v.blobs_file = dir / (stem + "_blobs.pgm");
  v.boundary_file = dir / (stem + "_boundary.pgm");
  write_pgm(upscale_nearest(blobs, kVizUpscale), v.blobs_file);
  write_pgm(upscale_nearest(v.cut.boundary, kVizUpscale), v.boundary_file);
  return v;
}

}  // namespace dcn
