#include "crm/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "crm/error.hpp"
#include "crm/eval.hpp"
#include "crm/rng.hpp"

namespace crm {

void TrainConfig::validate() const {
  if (batch_size < 2 || batch_size % 2 != 0)
    throw InvalidArgument("batch size must be even and at least 2 (got " + std::to_string(batch_size) + ")");
  if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
  if (!(base_lr > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  if (const auto* m = std::get_if<MRanking>(&estimator); m && m->m > batch_size / 2)
    throw InvalidArgument("m-ranking m exceeds the calibration half-batch");
  if (const auto* e = std::get_if<EpsThreshold>(&estimator); e && !(e->epsilon > 0.0))
    throw InvalidArgument("eps-threshold epsilon must be positive");
  conformal.validate();
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,train_loss,test_loss,test_acc,avg_set_size,coverage,mean_selected,grad_norm\n"
      << std::setprecision(10);
  for (const auto& r : epochs)
    out << r.epoch << ',' << r.train_loss << ',' << r.test_loss << ',' << r.test_acc << ','
        << r.avg_set_size << ',' << r.coverage << ',' << r.mean_selected << ',' << r.grad_norm << '\n';
}

BatchSplit split_batch(std::span<const Example> batch, Rng& rng) {
  if (batch.empty() || batch.size() % 2 != 0)
    throw InvalidArgument("batch of size " + std::to_string(batch.size()) + " cannot be split in halves");
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t half = batch.size() / 2;
  BatchSplit split;
  split.cal.reserve(half);
  split.pred.reserve(half);
  for (std::size_t i = 0; i < half; ++i) split.cal.push_back(batch[order[i]]);
  for (std::size_t i = half; i < batch.size(); ++i) split.pred.push_back(batch[order[i]]);
  return split;
}

double lr_at(std::size_t epoch, std::size_t total_epochs, double base_lr) {
  double lr = base_lr;
  for (const std::size_t fifths : {2u, 3u, 4u})
    if (epoch >= fifths * total_epochs / 5) lr *= 0.1;
  return lr;
}

void nesterov_step(std::span<double> params, std::span<double> velocity,
                   std::span<const double> grad, double lr, double mu) {
  if (velocity.size() != params.size()) throw DimensionError("velocity", params.size(), velocity.size());
  if (grad.size() != params.size()) throw DimensionError("gradient", params.size(), grad.size());
  for (std::size_t j = 0; j < params.size(); ++j) {
    velocity[j] = mu * velocity[j] + grad[j];
    params[j] -= lr * (grad[j] + mu * velocity[j]);
  }
}

StepLog train_step(Model& model, std::vector<double>& velocity, std::span<const Example> batch,
                   const TrainConfig& cfg, double lr, Rng& rng) {
  if (batch.size() != cfg.batch_size)
    throw DimensionError("training batch", cfg.batch_size, batch.size());
  if (velocity.size() != model.param_count()) velocity.assign(model.param_count(), 0.0);
  const auto& cc = cfg.conformal;

  const auto split = split_batch(batch, rng);
  StepLog log;
  log.estimate = estimate(model, split.cal, cc.alpha, cc.score_kind, cfg.estimator);
  log.components = loss_and_partials(model, log.estimate.tau_hat, split.pred, cc);
  log.reg = reg_grad(model, cc.reg_weight);
  log.gradient = plugin_gradient(log.components, log.estimate, log.reg);
  if (cc.base_loss_weight > 0.0) {
    auto ce = cross_entropy(model, split.pred);
    for (auto& g : ce.grad) g *= cc.base_loss_weight;
    for (std::size_t j = 0; j < log.gradient.size(); ++j) log.gradient[j] += ce.grad[j];
    log.base = std::move(ce.grad);
  }

  const auto h = h_transform(log.components.ell_bar);
  log.ell_bar = log.components.ell_bar;
  log.h_value = h.value;
  log.h_prime = h.derivative;
  log.tau_hat = log.estimate.tau_hat;
  log.n_selected = log.estimate.n_selected;
  log.effective_epsilon = log.estimate.effective_epsilon;
  log.inactive = log.components.ell_bar == 0.0;
  double norm2 = 0.0;
  for (const double g : log.gradient) norm2 += g * g;
  log.grad_norm = std::sqrt(norm2);

  nesterov_step(model.params(), velocity, log.gradient, lr, cfg.momentum);
  return log;
}

std::pair<Model, TrainHistory> train(Model model, const Dataset& train_set, const Dataset& cal_set,
                                     const Dataset& test_set, const TrainConfig& cfg,
                                     const StepObserver& observer) {
  cfg.validate();
  if (train_set.size() <= cfg.batch_size)
    throw InvalidArgument("training set (" + std::to_string(train_set.size()) +
                          ") must be larger than the batch size (" + std::to_string(cfg.batch_size) + ")");
  if (model.input_dim() != train_set.feature_dim())
    throw DimensionError("model input vs dataset features", train_set.feature_dim(), model.input_dim());
  if (model.output_dim() != train_set.num_classes())
    throw DimensionError("model outputs vs dataset classes", train_set.num_classes(), model.output_dim());

  const auto& cc = cfg.conformal;
  const Rng root(cfg.seed);
  const Rng shuffle_root = root.derive("epoch-shuffle");
  Rng split_rng = root.derive("batch-split");
  std::vector<double> velocity(model.param_count(), 0.0);
  const auto cal_examples = cal_set.examples();
  const auto test_examples = test_set.examples();

  TrainHistory history;
  std::vector<std::size_t> order(train_set.size());
  std::vector<Example> batch;
  const std::size_t steps = train_set.size() / cfg.batch_size;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg.epochs, cfg.base_lr);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = shuffle_root.derive(static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t s = 0; s < steps; ++s) {
      batch = train_set.examples(std::span<const std::size_t>(order).subspan(s * cfg.batch_size, cfg.batch_size));
      const auto log = train_step(model, velocity, batch, cfg, lr, split_rng);
      rec.train_loss += log.h_value;
      rec.mean_selected += static_cast<double>(log.n_selected);
      rec.grad_norm += log.grad_norm;
      if (observer) observer(epoch, s, log);
    }
    const auto inv_steps = 1.0 / static_cast<double>(steps);
    rec.train_loss *= inv_steps;
    rec.mean_selected *= inv_steps;
    rec.grad_norm *= inv_steps;

    if (!cal_examples.empty() && !test_examples.empty()) {
      const auto m = calibrate_and_predict(model, cal_examples, test_examples, cc.alpha, cc.score_kind);
      rec.test_loss = h_transform(mean_size_loss(model, m.tau, test_examples, cc)).value;
      rec.test_acc = accuracy(model, test_examples);
      rec.avg_set_size = m.sets.avg_size;
      rec.coverage = m.sets.coverage;
    }
    history.epochs.push_back(rec);
  }
  return {std::move(model), std::move(history)};
}

}  // namespace crm
