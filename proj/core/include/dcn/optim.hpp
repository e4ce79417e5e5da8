#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "dcn/data.hpp"
#include "dcn/network.hpp"

namespace dcn {

/// AdaDelta running averages plus a heavy-ball momentum buffer on the
/// AdaDelta update.
struct AdaDeltaState {
  std::vector<double> acc_grad;
  std::vector<double> acc_update;
  std::vector<double> prev_update;
  double rho = 0.95;
  double eps = 1e-6;
  double momentum = 0.8;

  AdaDeltaState() = default;
  explicit AdaDeltaState(std::size_t size, double rho = 0.95, double eps = 1e-6, double momentum = 0.8)
      : acc_grad(size, 0.0), acc_update(size, 0.0), prev_update(size, 0.0), rho(rho), eps(eps), momentum(momentum) {}
};

/// One AdaDelta step with momentum, applied to `params` in place:
///   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
///   delta   =  -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] <- rho E[dx^2] + (1 - rho) delta^2
///   step    =  momentum * prev_step + delta
void adadelta_step(std::span<double> params, std::span<const double> grads, AdaDeltaState& state);

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t iterations = 5000;
  std::uint64_t seed = 1;
  std::size_t eval_interval = 500;
  /// 0 evaluates on the whole test split.
  std::size_t eval_samples = 0;
  double rho = 0.95;
  double eps = 1e-6;
  double momentum = 0.8;
  /// Parameters are left untouched (learning disabled).
  bool frozen = false;
};

struct HistoryRow {
  std::size_t iteration = 0;
  double train_loss = 0.0;
  std::optional<double> test_loss;
  std::optional<double> test_accuracy;
};

struct TrainHistory {
  std::vector<HistoryRow> rows;

  /// CSV with header `iteration,train_loss,test_loss,test_accuracy`; test
  /// fields are empty on iterations without an evaluation.
  void write_csv(std::ostream& out) const;
  std::optional<HistoryRow> last_evaluation() const;
};

/// Deterministic mini-batch order: indices reshuffled once per epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t count, std::uint64_t seed);
  std::vector<std::size_t> next(std::size_t batch_size);

 private:
  void reshuffle();
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
};

using TrainObserver = std::function<void(const HistoryRow&)>;

/// Trains `network` in place. Constraints are projected after every step
/// and validated at every evaluation. `test` may be null.
TrainHistory train(Network& network, const LabeledDataset& train_set, const LabeledDataset* test_set,
                   const TrainConfig& config, const TrainObserver& observer = {});

}  // namespace dcn
