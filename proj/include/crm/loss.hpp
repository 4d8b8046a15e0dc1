#pragma once

#include <span>
#include <vector>

#include "crm/conformal.hpp"
#include "crm/nn.hpp"

namespace crm {

/// Sample means over the prediction batch at a fixed threshold.
struct LossComponents {
  double ell_bar = 0.0;
  std::vector<double> dl_dtheta_bar;
  double dl_dtau_bar = 0.0;
};

/// max(0, sum of memberships - kappa).
double size_loss(const SmoothSet& smooth, double kappa);

/// Mean smoothed size loss over `batch_pred` at threshold `tau_hat`, with its
/// partial derivatives in the parameters (tau held fixed) and in tau. The loss
/// of every example is scaled by `config.size_weight`.
LossComponents loss_and_partials(const Model& model, double tau_hat,
                                 std::span<const Example> batch_pred,
                                 const ConformalConfig& config);

/// The ell_bar of `loss_and_partials` without the derivatives.
double mean_size_loss(const Model& model, double tau_hat, std::span<const Example> batch,
                      const ConformalConfig& config);

inline constexpr double kLogFloor = 1e-8;

struct HTransform {
  double value = 0.0;
  double derivative = 0.0;
};

/// h = log(max(ell, 1e-8)) and its derivative.
HTransform h_transform(double ell_bar);

/// lambda * ||theta||^2 and its gradient 2 lambda theta.
double reg_value(const Model& model, double lambda);
std::vector<double> reg_grad(const Model& model, double lambda);

/// Mean cross-entropy over the batch and its parameter gradient. This is the
/// optional base-loss term of the training objective.
struct CrossEntropy {
  double value = 0.0;
  std::vector<double> grad;
};
CrossEntropy cross_entropy(const Model& model, std::span<const Example> batch);

}  // namespace crm
