#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "crm/conformal.hpp"
#include "crm/data.hpp"
#include "crm/grad_est.hpp"
#include "crm/loss.hpp"
#include "crm/nn.hpp"

namespace crm {

class Rng;

struct TrainConfig {
  std::size_t batch_size = 500;  // 2n: split into equal calibration/prediction halves
  std::size_t epochs = 50;
  double base_lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  EstimatorKind estimator = MRanking{6};
  ConformalConfig conformal;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean of h(ell_bar) over the epoch's steps
  double test_loss = 0.0;   // h(ell_bar) on the test set at the calibrated threshold
  double test_acc = 0.0;
  double avg_set_size = 0.0;
  double coverage = 0.0;
  double mean_selected = 0.0;
  double grad_norm = 0.0;  // mean step gradient norm
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// Header: epoch,train_loss,test_loss,test_acc,avg_set_size,coverage,mean_selected,grad_norm
  void write_csv(std::ostream& out) const;
};

struct BatchSplit {
  std::vector<Example> cal;
  std::vector<Example> pred;
};

/// Uniformly random equal-size partition of an even-sized batch.
BatchSplit split_batch(std::span<const Example> batch, Rng& rng);

/// Base rate times 0.1 for every passed milestone at floor(2T/5), floor(3T/5)
/// and floor(4T/5).
double lr_at(std::size_t epoch, std::size_t total_epochs, double base_lr);

/// v' = mu v + g; params' = params - lr (g + mu v'). Updates in place.
void nesterov_step(std::span<double> params, std::span<double> velocity,
                   std::span<const double> grad, double lr, double mu);

/// Everything one training step computed, enough to reassemble its gradient.
struct StepLog {
  double ell_bar = 0.0;
  double h_value = 0.0;
  double h_prime = 0.0;
  double tau_hat = 0.0;
  std::size_t n_selected = 0;
  double effective_epsilon = 0.0;
  double grad_norm = 0.0;
  bool inactive = false;  // every hinge in B_pred was inactive
  LossComponents components;
  GradEstimate estimate;
  std::vector<double> reg;
  std::vector<double> base;  // weighted cross-entropy gradient; empty when off
  std::vector<double> gradient;
};

/// One plug-in gradient step on `batch` (size cfg.batch_size).
StepLog train_step(Model& model, std::vector<double>& velocity, std::span<const Example> batch,
                   const TrainConfig& cfg, double lr, Rng& rng);

/// Called after every step with (epoch, step-in-epoch, log).
using StepObserver = std::function<void(std::size_t, std::size_t, const StepLog&)>;

/// Epochs of shuffled minibatches (last partial batch dropped), evaluating on
/// the fixed (cal, test) pair after every epoch.
std::pair<Model, TrainHistory> train(Model model, const Dataset& train_set, const Dataset& cal_set,
                                     const Dataset& test_set, const TrainConfig& cfg,
                                     const StepObserver& observer = {});

}  // namespace crm
