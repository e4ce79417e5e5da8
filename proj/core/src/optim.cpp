#include "dcn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "dcn/error.hpp"

namespace dcn {

void adadelta_step(std::span<double> params, std::span<const double> grads, AdaDeltaState& state) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.acc_grad.size() != n || state.acc_update.size() != n ||
      state.prev_update.size() != n) {
    throw InvalidInput("adadelta_step: parameter, gradient and state sizes differ");
  }
  const double rho = state.rho;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    state.acc_grad[i] = rho * state.acc_grad[i] + (1.0 - rho) * g * g;
    const double delta = -std::sqrt(state.acc_update[i] + state.eps) / std::sqrt(state.acc_grad[i] + state.eps) * g;
    state.acc_update[i] = rho * state.acc_update[i] + (1.0 - rho) * delta * delta;
    const double step = state.momentum * state.prev_update[i] + delta;
    params[i] += step;
    state.prev_update[i] = step;
  }
}

void TrainHistory::write_csv(std::ostream& out) const {
  const auto old_precision = out.precision(17);
  out << "iteration,train_loss,test_loss,test_accuracy\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << r.train_loss << ',';
    if (r.test_loss) out << *r.test_loss;
    out << ',';
    if (r.test_accuracy) out << *r.test_accuracy;
    out << '\n';
  }
  out.precision(old_precision);
}

std::optional<HistoryRow> TrainHistory::last_evaluation() const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (it->test_accuracy) return *it;
  }
  return std::nullopt;
}

BatchSampler::BatchSampler(std::size_t count, std::uint64_t seed) : order_(count), seed_(seed) {
  if (count == 0) throw InvalidInput("BatchSampler: empty dataset");
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::mt19937_64 rng(seed_ ^ (0x9E3779B97F4A7C15ULL * (epoch_ + 1)));
  std::shuffle(order_.begin(), order_.end(), rng);
  cursor_ = 0;
  ++epoch_;
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch_size) {
  std::vector<std::size_t> batch;
  batch.reserve(batch_size);
  while (batch.size() < batch_size) {
    if (cursor_ == order_.size()) reshuffle();
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

TrainHistory train(Network& network, const LabeledDataset& train_set, const LabeledDataset* test_set,
                   const TrainConfig& config, const TrainObserver& observer) {
  if (config.batch_size < 1 || config.iterations < 1) throw InvalidInput("train: batch size and iterations must be >= 1");
  if (train_set.size() == 0) throw InvalidInput("train: empty training set");
  const NetworkConfig& net = network.config();
  if (train_set.images.c() != net.channels || train_set.images.h() != net.height ||
      train_set.images.w() != net.width) {
    throw InvalidInput("train: dataset images do not match the network input");
  }
  if (train_set.class_count > net.classes()) throw InvalidInput("train: dataset has more classes than the network");

  std::optional<LabeledDataset> eval_subset;
  const LabeledDataset* eval_set = test_set;
  if (test_set != nullptr && config.eval_samples > 0 && config.eval_samples < test_set->size()) {
    eval_subset = test_set->head(config.eval_samples);
    eval_set = &*eval_subset;
  }

  AdaDeltaState state(network.parameter_count(), config.rho, config.eps, config.momentum);
  BatchSampler sampler(train_set.size(), config.seed);
  TrainHistory history;
  std::vector<int> labels(config.batch_size);
  std::vector<double> params = network.parameters();

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    const auto idx = sampler.next(config.batch_size);
    for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train_set.labels[idx[i]];
    HistoryRow row;
    row.iteration = it;
    row.train_loss = network.forward_backward(gather_samples(train_set.images, idx), labels);
    if (!config.frozen) {
      const auto grads = network.gradients();
      adadelta_step(params, grads, state);
      network.set_parameters(params);
      network.project_constraints();
      params = network.parameters();
    }
    const bool evaluate_now = config.eval_interval > 0 && (it % config.eval_interval == 0 || it == config.iterations);
    if (evaluate_now) {
      network.validate_constraints();
      if (eval_set != nullptr) {
        const Evaluation e = network.evaluate(eval_set->images, eval_set->labels);
        row.test_loss = e.loss;
        row.test_accuracy = e.accuracy;
      }
    }
    history.rows.push_back(row);
    if (observer) observer(row);
  }
  return history;
}

}  // namespace dcn
