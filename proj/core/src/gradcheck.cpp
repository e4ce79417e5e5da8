#include "dcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dcn/comp_layer.hpp"

namespace dcn {
namespace {

double weighted_sum(const Tensor4& t, const Tensor4& r) {
  double acc = 0.0;
  auto a = t.data();
  auto b = r.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Tensor4 random_tensor(Shape4 shape, std::mt19937_64& rng) {
  Tensor4 t(shape);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : t.data()) v = u(rng);
  return t;
}

void record(GradClassStats& stats, double analytic, double numeric, const GradCheckOptions& o) {
  const double a = analytic * (1.0 + o.perturb) + o.perturb;
  stats.max_rel_err = std::max(stats.max_rel_err, relative_error(a, numeric, o.denominator_floor));
  ++stats.checked;
}

struct Differences {
  double two_point;
  double four_point;
};

// f is evaluated at x + d for d in {-2h, -h, h, 2h}.
template <class F>
Differences central_differences(F&& f, double h) {
  const double m1 = f(-h), p1 = f(h), m2 = f(-2.0 * h), p2 = f(2.0 * h);
  return {(p1 - m1) / (2.0 * h), (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)};
}

void record(GradClassStats& stats, double analytic, const Differences& d, const GradCheckOptions& o) {
  record(stats, analytic, o.fourth_order ? d.four_point : d.two_point, o);
  const double a = analytic * (1.0 + o.perturb) + o.perturb;
  stats.max_rel_err_two_point =
      std::max(stats.max_rel_err_two_point, relative_error(a, d.two_point, o.denominator_floor));
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

bool GradCheckReport::passed() const {
  return std::all_of(classes.begin(), classes.end(),
                     [&](const GradClassStats& c) { return c.checked > 0 && c.max_rel_err <= tolerance; });
}

std::string GradCheckReport::to_text() const {
  std::ostringstream out;
  out.precision(3);
  out << std::scientific;
  for (const auto& c : classes) {
    out << "  " << c.name << ": max rel err " << c.max_rel_err << " over " << c.checked << " entries  "
        << (c.checked > 0 && c.max_rel_err <= tolerance ? "ok" : "FAIL");
    if (c.max_rel_err_two_point > 0.0) out << "  (two-point " << c.max_rel_err_two_point << ")";
    out << "\n";
  }
  out << (passed() ? "PASS" : "FAIL") << " (" << configurations << " configurations, tolerance " << tolerance << ")\n";
  return out.str();
}

GradCheckReport check_comp_layer_gradients(const GradCheckOptions& o) {
  GradCheckReport report;
  report.tolerance = o.tolerance;
  report.configurations = o.configurations;
  report.classes = {{"weight", 0, 0}, {"mean_x", 0, 0}, {"mean_y", 0, 0},
                    {"sigma", 0, 0},  {"bias", 0, 0},   {"input", 0, 0}};
  std::mt19937_64 rng(o.seed);
  const std::size_t sizes[] = {5, 6, 7, 8, 9};
  const std::size_t counts[] = {1, 4, 9};
  const double h = o.step;

  for (std::size_t cfg = 0; cfg < o.configurations; ++cfg) {
    const std::size_t kw = sizes[rng() % 5];
    const std::size_t kh = sizes[rng() % 5];
    const std::size_t g = counts[cfg % 3];
    const KernelGeometry geom = KernelGeometry::checked(kw, kh);
    CompFilterBank bank(2, 2, geom, g);
    std::uniform_real_distribution<double> mx(geom.mean_lo(), geom.mean_hi_x());
    std::uniform_real_distribution<double> my(geom.mean_lo(), geom.mean_hi_y());
    std::uniform_real_distribution<double> sigma(0.6, 2.5);
    std::normal_distribution<double> weight(0.0, 1.0);
    for (auto& c : bank.components()) c = {weight(rng), {mx(rng), my(rng)}, sigma(rng)};
    for (double& b : bank.bias()) b = weight(rng);

    Tensor4 input = random_tensor({2, 2, 10, 10}, rng);
    const Tensor4 r = random_tensor({2, 2, 10 - kh + 1, 10 - kw + 1}, rng);
    auto loss = [&](const CompFilterBank& b, const Tensor4& x) { return weighted_sum(comp_forward(x, b), r); };

    const CompLayerGrads grads = comp_backward_params(input, r, bank);
    const Tensor4 d_input = comp_backward_input(r, bank);

    auto central = [&](auto&& mutate) {
      return central_differences(
          [&](double d) {
            CompFilterBank moved = bank;
            mutate(moved, d);
            return loss(moved, input);
          },
          h);
    };
    for (std::size_t k = 0; k < bank.component_count(); ++k) {
      record(report.classes[0], grads.d_weight[k],
             central([&](CompFilterBank& b, double d) { b.components()[k].weight += d; }), o);
      record(report.classes[1], grads.d_mean_x[k],
             central([&](CompFilterBank& b, double d) { b.components()[k].mean.x += d; }), o);
      record(report.classes[2], grads.d_mean_y[k],
             central([&](CompFilterBank& b, double d) { b.components()[k].mean.y += d; }), o);
      record(report.classes[3], grads.d_sigma[k],
             central([&](CompFilterBank& b, double d) { b.components()[k].sigma += d; }), o);
    }
    for (std::size_t f = 0; f < bank.features(); ++f) {
      record(report.classes[4], grads.d_bias[f], central([&](CompFilterBank& b, double d) { b.bias()[f] += d; }), o);
    }
    for (std::size_t i = 0; i < input.size(); ++i) {
      const double saved = input.data()[i];
      const Differences d = central_differences(
          [&](double delta) {
            input.data()[i] = saved + delta;
            return loss(bank, input);
          },
          h);
      input.data()[i] = saved;
      record(report.classes[5], d_input.data()[i], d, o);
    }
  }
  return report;
}

GradCheckReport check_network_gradients(const NetworkConfig& config, const GradCheckOptions& o,
                                        std::size_t samples_per_layer) {
  GradCheckReport report;
  report.tolerance = o.tolerance;
  report.configurations = 1;
  std::mt19937_64 rng(o.seed);
  Network net(config, o.seed);
  const std::size_t classes = config.classes();
  Tensor4 input = random_tensor({2, config.channels, config.height, config.width}, rng);
  std::vector<int> labels = {static_cast<int>(rng() % classes), static_cast<int>(rng() % classes)};

  net.forward_backward(input, labels);
  const std::vector<double> grads = net.gradients();
  std::vector<double> params = net.parameters();

  // Parameter ranges per parametric layer, in the order of parameters().
  std::size_t offset = 0;
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    std::size_t count = 0;
    std::string name;
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, CompConvLayer>) {
            count = 4 * l.bank.component_count() + l.bank.features();
            name = "comp_conv";
          } else if constexpr (std::is_same_v<T, DenseConvLayer>) {
            count = l.bank.weights.size() + l.bank.bias.size();
            name = "dense_conv";
          } else if constexpr (std::is_same_v<T, FullyConnectedLayer>) {
            count = l.weights.size() + l.bias.size();
            name = "fully_connected";
          }
        },
        net.layers()[li]);
    if (count == 0) continue;
    GradClassStats stats{"layer " + std::to_string(li + 1) + " " + name, 0.0, 0};
    for (std::size_t s = 0; s < std::min(samples_per_layer, count); ++s) {
      const std::size_t i = offset + rng() % count;
      Network probe = net;
      auto at = [&](double delta) {
        std::vector<double> p = params;
        p[i] += delta;
        probe.set_parameters(p);
        return softmax_xent(probe.forward(input), labels).loss;
      };
      // ReLU and max-pool kinks can fall inside [-h, h]; shrink the step
      // before calling it a mismatch.
      const double analytic = grads[i] * (1.0 + o.perturb) + o.perturb;
      double best = std::numeric_limits<double>::infinity();
      double numeric = 0.0;
      for (double h = o.step; h >= o.step * 1e-2; h *= 0.1) {
        const double n = (at(h) - at(-h)) / (2.0 * h);
        const double err = relative_error(analytic, n, o.denominator_floor);
        if (err < best) {
          best = err;
          numeric = n;
        }
        if (err <= o.tolerance) break;
      }
      record(stats, grads[i], numeric, o);
    }
    report.classes.push_back(stats);
    offset += count;
  }
  return report;
}

}  // namespace dcn
