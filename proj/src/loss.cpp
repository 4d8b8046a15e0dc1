#include "crm/loss.hpp"

#include <cmath>

#include "crm/error.hpp"

namespace crm {

double size_loss(const SmoothSet& smooth, double kappa) {
  if (!(kappa >= 0.0)) throw InvalidArgument("target size must be nonnegative");
  const double excess = smooth.size() - kappa;
  return excess > 0.0 ? excess : 0.0;
}

LossComponents loss_and_partials(const Model& model, double tau_hat,
                                 std::span<const Example> batch_pred,
                                 const ConformalConfig& config) {
  if (batch_pred.empty()) throw InvalidArgument("loss over an empty prediction batch");
  if (!(config.temperature > 0.0)) throw InvalidArgument("temperature must be positive");

  const double inv_t = 1.0 / config.temperature;
  const double w = config.size_weight;
  const std::size_t num_classes = model.output_dim();
  LossComponents out;
  out.dl_dtheta_bar.assign(model.param_count(), 0.0);
  std::vector<double> cotangent(num_classes);

  for (const auto& ex : batch_pred) {
    const auto logits = model.forward(ex.x);
    const auto scores = all_scores(logits, config.score_kind);
    double size = 0.0;
    std::vector<double> slope(num_classes);  // d membership_k / d (E_k - tau)
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double s = sigmoid((scores[k] - tau_hat) * inv_t);
      size += s;
      slope[k] = s * (1.0 - s) * inv_t;
    }
    const double excess = size - config.target_size;
    // Hinge subgradient at excess == 0 is 0.
    if (!(excess > 0.0)) continue;
    out.ell_bar += w * excess;

    // Logit-space cotangent of sum_k membership_k = sum_k slope_k dE_k/dlogits.
    std::fill(cotangent.begin(), cotangent.end(), 0.0);
    double slope_sum = 0.0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      slope_sum += slope[k];
      if (slope[k] == 0.0) continue;
      const auto dscore = score_logit_grad(logits, k, config.score_kind);
      for (std::size_t j = 0; j < num_classes; ++j) cotangent[j] += slope[k] * dscore[j];
    }
    out.dl_dtau_bar -= w * slope_sum;
    model.accumulate_vjp(ex.x, cotangent, w, out.dl_dtheta_bar);
  }

  const double inv_n = 1.0 / static_cast<double>(batch_pred.size());
  out.ell_bar *= inv_n;
  out.dl_dtau_bar *= inv_n;
  for (auto& g : out.dl_dtheta_bar) g *= inv_n;
  return out;
}

double mean_size_loss(const Model& model, double tau_hat, std::span<const Example> batch,
                      const ConformalConfig& config) {
  if (batch.empty()) throw InvalidArgument("loss over an empty batch");
  double total = 0.0;
  for (const auto& ex : batch)
    total += size_loss(smooth_set(model.forward(ex.x), tau_hat, config), config.target_size);
  return config.size_weight * total / static_cast<double>(batch.size());
}

HTransform h_transform(double ell_bar) {
  if (!(ell_bar >= 0.0)) throw InvalidArgument("h transform of a negative loss");
  const double clamped = ell_bar > kLogFloor ? ell_bar : kLogFloor;
  return {std::log(clamped), 1.0 / clamped};
}

double reg_value(const Model& model, double lambda) {
  if (!(lambda >= 0.0)) throw InvalidArgument("regularizer weight must be nonnegative");
  double sq = 0.0;
  for (const double p : model.params()) sq += p * p;
  return lambda * sq;
}

std::vector<double> reg_grad(const Model& model, double lambda) {
  if (!(lambda >= 0.0)) throw InvalidArgument("regularizer weight must be nonnegative");
  std::vector<double> g(model.params().begin(), model.params().end());
  for (auto& v : g) v *= 2.0 * lambda;
  return g;
}

CrossEntropy cross_entropy(const Model& model, std::span<const Example> batch) {
  if (batch.empty()) throw InvalidArgument("cross-entropy over an empty batch");
  CrossEntropy ce;
  ce.grad.assign(model.param_count(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    const auto logits = model.forward(ex.x);
    ce.value -= score(logits, ex.y, ScoreKind::LogProbability) * inv_n;
    const auto cot = score_logit_grad(logits, ex.y, ScoreKind::LogProbability);
    model.accumulate_vjp(ex.x, cot, -inv_n, ce.grad);
  }
  return ce;
}

}  // namespace crm
