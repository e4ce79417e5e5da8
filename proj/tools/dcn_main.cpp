// dcn: train, evaluate, check, prune, visualize and benchmark
// compositional-filter networks.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcn/bench.hpp"
#include "dcn/data.hpp"
#include "dcn/error.hpp"
#include "dcn/gradcheck.hpp"
#include "dcn/model_file.hpp"
#include "dcn/network.hpp"
#include "dcn/optim.hpp"
#include "dcn/prune.hpp"
#include "dcn/viz.hpp"

namespace fs = std::filesystem;

namespace {

struct DataOptions {
  std::string dataset = "cifar10";
  std::string data_dir;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  std::size_t synth_train = 2000;
  std::size_t synth_test = 500;
  std::uint64_t data_seed = 7;

  void add_to(CLI::App& cmd, bool needs_train) {
    cmd.add_option("--dataset", dataset, "cifar10 or synth")->check(CLI::IsMember({"cifar10", "synth"}));
    cmd.add_option("--data-dir", data_dir, "Directory with the CIFAR-10 binary batches");
    if (needs_train) cmd.add_option("--train-limit", train_limit, "Use only the first N training records (0 = all)");
    cmd.add_option("--test-limit", test_limit, "Use only the first N test records (0 = all)");
    cmd.add_option("--synth-train", synth_train, "Synthetic training images");
    cmd.add_option("--synth-test", synth_test, "Synthetic test images");
    cmd.add_option("--data-seed", data_seed, "Seed of the synthetic dataset");
  }

  dcn::DatasetSplit load(const dcn::NetworkConfig& config) const {
    if (dataset == "synth") {
      if (config.channels != 1) throw dcn::InvalidInput("synthetic data is single-channel; config has " +
                                                        std::to_string(config.channels) + " channels");
      const std::size_t classes = std::min<std::size_t>(config.classes(), 8);
      dcn::DatasetSplit split{dcn::synth_shapes(data_seed, synth_train, classes, config.width, config.height),
                              dcn::synth_shapes(data_seed + 1, synth_test, classes, config.width, config.height)};
      dcn::center_with_train_means(split.train, split.test);
      return split;
    }
    if (data_dir.empty()) throw dcn::InvalidInput("--data-dir is required for the cifar10 dataset");
    return dcn::load_cifar10(data_dir, train_limit, test_limit);
  }
};

fs::path default_history_path(const fs::path& model) {
  fs::path p = model;
  p.replace_extension(".history.csv");
  return p;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_eval_row(const dcn::HistoryRow& row) {
  std::printf("iter %6zu  train_loss %.5f", row.iteration, row.train_loss);
  if (row.test_loss) std::printf("  test_loss %.5f  test_acc %.4f", *row.test_loss, *row.test_accuracy);
  std::printf("\n");
  std::fflush(stdout);
}

int cmd_train(const std::string& config_path, const DataOptions& data, const fs::path& out, fs::path history_path,
              const dcn::TrainConfig& tc, std::size_t log_interval) {
  const auto config = dcn::NetworkConfig::load(config_path);
  const auto split = data.load(config);
  dcn::Network net(config, tc.seed);
  std::printf("network: %zu parameters, %zu train / %zu test samples\n", net.parameter_count(), split.train.size(),
              split.test.size());
  const auto start = std::chrono::steady_clock::now();
  const auto history = dcn::train(net, split.train, &split.test, tc, [&](const dcn::HistoryRow& row) {
    if (row.test_loss || (log_interval > 0 && row.iteration % log_interval == 0)) print_eval_row(row);
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  dcn::save_model(net, {tc.seed, tc.iterations}, out);
  if (history_path.empty()) history_path = default_history_path(out);
  std::ofstream hist(history_path);
  if (!hist) throw dcn::IoError("cannot write " + history_path.string());
  history.write_csv(hist);

  std::printf("trained %zu iterations in %.1f s (%.3f s/iter)\n", tc.iterations, seconds,
              seconds / static_cast<double>(tc.iterations));
  if (const auto last = history.last_evaluation(); last && last->test_accuracy) {
    std::printf("final test accuracy: %.4f  test loss: %.5f\n", *last->test_accuracy, *last->test_loss);
  }
  std::printf("model: %s\nhistory: %s\n", out.c_str(), history_path.c_str());
  return 0;
}

int cmd_eval(const fs::path& model_path, const DataOptions& data) {
  auto model = dcn::load_model(model_path);
  const auto split = data.load(model.network.config());
  const auto e = model.network.evaluate(split.test.images, split.test.labels);
  std::printf("test samples: %zu\ntest loss: %.6f\ntest accuracy: %.4f\n", split.test.size(), e.loss, e.accuracy);
  return 0;
}

int cmd_gradcheck(const std::string& config_path, const dcn::GradCheckOptions& options) {
  auto report = dcn::check_comp_layer_gradients(options);
  std::printf("compositional layer, %zu configurations\n%s", report.configurations, report.to_text().c_str());
  bool ok = report.passed();
  if (!config_path.empty()) {
    const auto net_report = dcn::check_network_gradients(dcn::NetworkConfig::load(config_path), options);
    std::printf("network %s\n%s", config_path.c_str(), net_report.to_text().c_str());
    ok = ok && net_report.passed();
  }
  std::printf("%s\n", ok ? "gradcheck: PASS" : "gradcheck: FAIL");
  return ok ? 0 : 1;
}

int cmd_bench(const dcn::BenchConfig& config, const fs::path& out) {
  const auto rows = dcn::run_bench(config);
  dcn::write_bench_csv(rows, std::cout);
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw dcn::IoError("cannot write " + out.string());
    dcn::write_bench_csv(rows, f);
  }
  return 0;
}

int cmd_prune(const fs::path& model_path, const fs::path& out, double tau, double fraction, const DataOptions& data,
              bool with_data, const fs::path& report_csv) {
  auto model = dcn::load_model(model_path);
  dcn::Network& net = model.network;
  std::optional<dcn::DatasetSplit> split;
  if (with_data) split = data.load(net.config());
  auto loss = [&]() { return split ? net.evaluate(split->test.images, split->test.labels).loss : 0.0; };

  std::optional<dcn::Evaluation> before;
  if (split) before = net.evaluate(split->test.images, split->test.labels);
  std::vector<dcn::PruneReport> reports;
  const std::size_t layers = net.comp_layer_indices().size();
  for (std::size_t i = 0; i < layers; ++i) {
    dcn::PruneReport report;
    report.layer = i + 1;
    report.loss_before = loss();
    net.comp_bank(i) = dcn::prune_bank(net.comp_bank(i), tau, fraction, report);
    report.loss_after = loss();
    std::printf("%s", report.to_text().c_str());
    reports.push_back(report);
  }
  if (split) {
    const auto after = net.evaluate(split->test.images, split->test.labels);
    std::printf("test accuracy: %.4f -> %.4f\ntest loss: %.6f -> %.6f\n", before->accuracy, after.accuracy,
                before->loss, after.loss);
  }
  if (!report_csv.empty()) {
    std::ofstream f(report_csv);
    if (!f) throw dcn::IoError("cannot write " + report_csv.string());
    f << dcn::PruneReport::csv_header() << '\n';
    for (const auto& r : reports) f << r.to_csv_row() << '\n';
  }
  dcn::save_model(net, model.meta, out);
  std::printf("pruned model: %s\n", out.c_str());
  return 0;
}

int cmd_viz(const fs::path& model_path, std::size_t layer, const std::vector<std::size_t>& features,
            const fs::path& dir) {
  const auto model = dcn::load_model(model_path);
  fs::create_directories(dir);
  for (std::size_t f : features) {
    const auto v = dcn::visualize_feature(model.network, layer, f, dir);
    double max_var = 0.0;
    for (const auto& r : v.recons) max_var = std::max(max_var, r.var);
    std::printf("layer %zu feature %zu: %zu gaussians, max variance %.4f, cut %.6g\n  %s\n  %s\n", layer, f,
                v.recons.size(), max_var, v.cut.flow, v.blobs_file.c_str(), v.boundary_file.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional-filter convolutional networks"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a network from a config file");
  std::string train_config;
  std::string train_out;
  std::string train_history;
  DataOptions train_data;
  dcn::TrainConfig tc;
  bool deterministic = false;
  std::size_t log_interval = 50;
  train->add_option("--config", train_config, "Network config file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Output model file")->required();
  train->add_option("--history", train_history, "History CSV (default: <out>.history.csv)");
  train->add_option("--iterations", tc.iterations, "Training iterations")->capture_default_str();
  train->add_option("--batch-size", tc.batch_size, "Mini-batch size")->capture_default_str();
  train->add_option("--seed", tc.seed, "Initialization and batch-order seed")->capture_default_str();
  train->add_option("--eval-interval", tc.eval_interval, "Evaluate every N iterations (0 = never)")
      ->capture_default_str();
  train->add_option("--eval-samples", tc.eval_samples, "Evaluate on the first N test samples (0 = all)");
  train->add_option("--log-interval", log_interval, "Print train loss every N iterations (0 = off)");
  train->add_flag("--deterministic", deterministic,
                  "Bit-reproducible run (training is single-threaded, so this is always the case)");
  train_data.add_to(*train, true);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a model on the test split");
  std::string eval_model;
  DataOptions eval_data;
  eval->add_option("--model", eval_model, "Model file")->required()->check(CLI::ExistingFile);
  eval_data.add_to(*eval, false);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  std::string gc_config;
  dcn::GradCheckOptions gco;
  gradcheck->add_option("--config", gc_config, "Also check a whole network built from this config");
  gradcheck->add_option("--seed", gco.seed)->capture_default_str();
  gradcheck->add_option("--configurations", gco.configurations, "Random layer configurations")->capture_default_str();
  gradcheck->add_option("--step", gco.step, "Central-difference step")->capture_default_str();
  gradcheck->add_option("--tolerance", gco.tolerance, "Maximum relative error")->capture_default_str();
  gradcheck->add_option("--perturb", gco.perturb, "Corrupt analytic gradients (negative control)");
  gradcheck->add_flag("!--two-point", gco.fourth_order, "Judge the layer check by the two-point difference");

  // bench
  auto* bench = app.add_subcommand("bench", "Time direct against separable compositional convolution");
  dcn::BenchConfig bc;
  std::string bench_kernels = "5,7,9,11,13,15,17,19,21";
  std::string bench_out;
  bench->add_option("--kernels", bench_kernels, "Comma-separated kernel sizes")->capture_default_str();
  bench->add_option("--components", bc.components, "Components per (feature, channel)")->capture_default_str();
  bench->add_option("--features", bc.features)->capture_default_str();
  bench->add_option("--channels", bc.channels)->capture_default_str();
  bench->add_option("--map-width", bc.map_width)->capture_default_str();
  bench->add_option("--map-height", bc.map_height)->capture_default_str();
  bench->add_option("--repeats", bc.repeats, "Timed repetitions per path (median reported)")->capture_default_str();
  bench->add_option("--seed", bc.seed)->capture_default_str();
  bench->add_option("--out", bench_out, "Also write the CSV here");

  // prune
  auto* prune = app.add_subcommand("prune", "Merge overlapping and discard weak components");
  std::string prune_model;
  std::string prune_out;
  std::string prune_csv;
  double tau = dcn::kDefaultMergeTau;
  double fraction = dcn::kDefaultDiscardFraction;
  DataOptions prune_data;
  prune->add_option("--model", prune_model, "Model file")->required()->check(CLI::ExistingFile);
  prune->add_option("--out", prune_out, "Pruned model file")->required();
  prune->add_option("--merge-tau", tau, "Merge when distance < tau * max sigma")->capture_default_str();
  prune->add_option("--prune-fraction", fraction, "Discard |w| below this fraction of the layer max")
      ->capture_default_str();
  prune->add_option("--report-csv", prune_csv, "Write the per-layer report as CSV");
  prune_data.add_to(*prune, false);

  // viz
  auto* viz = app.add_subcommand("viz", "Mean reconstruction and graph-cut boundary images");
  std::string viz_model;
  std::string viz_out = "viz";
  std::size_t viz_layer = 1;
  std::vector<std::size_t> viz_features{0};
  viz->add_option("--model", viz_model, "Model file")->required()->check(CLI::ExistingFile);
  viz->add_option("--layer", viz_layer, "Compositional layer (1-based)")->capture_default_str();
  viz->add_option("--feature", viz_features, "Feature index (repeatable)")->capture_default_str();
  viz->add_option("--out", viz_out, "Output directory")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "Export the synthetic shape dataset as PGM files");
  std::string synth_out;
  std::size_t synth_count = 64;
  std::size_t synth_classes = 8;
  std::uint64_t synth_seed = 7;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count)->capture_default_str();
  synth->add_option("--classes", synth_classes)->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      (void)deterministic;
      return cmd_train(train_config, train_data, train_out, train_history, tc, log_interval);
    }
    if (*eval) return cmd_eval(eval_model, eval_data);
    if (*gradcheck) return cmd_gradcheck(gc_config, gco);
    if (*bench) {
      bc.kernels.clear();
      for (const auto& k : split_list(bench_kernels)) bc.kernels.push_back(std::stoul(k));
      return cmd_bench(bc, bench_out);
    }
    if (*prune) {
      const bool with_data = prune_data.dataset == "synth" || !prune_data.data_dir.empty();
      return cmd_prune(prune_model, prune_out, tau, fraction, prune_data, with_data, prune_csv);
    }
    if (*viz) return cmd_viz(viz_model, viz_layer, viz_features, viz_out);
    if (*synth) {
      dcn::export_pgm_dataset(dcn::synth_shapes(synth_seed, synth_count, synth_classes), synth_out);
      std::printf("wrote %zu images to %s\n", synth_count, synth_out.c_str());
      return 0;
    }
  } catch (const dcn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
