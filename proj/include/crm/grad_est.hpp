#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "crm/conformal.hpp"
#include "crm/loss.hpp"
#include "crm/nn.hpp"

namespace crm {

/// Gradient of the empirical quantile itself (the ConfTr baseline).
struct Naive {};
/// Average score gradient over samples within epsilon of tau_hat.
struct EpsThreshold {
  double epsilon = 0.0;
};
/// Average score gradient over the m samples closest to tau_hat.
struct MRanking {
  std::size_t m = 1;
};

using EstimatorKind = std::variant<Naive, EpsThreshold, MRanking>;

/// "naive", "eps:<epsilon>" or "mrank:<m>".
std::string to_string(const EstimatorKind& kind);
EstimatorKind parse_estimator(std::string_view text);

struct GradEstimate {
  std::vector<double> eta_hat;
  std::size_t n_selected = 0;
  double effective_epsilon = 0.0;
  double tau_hat = 0.0;
};

/// Conformity scores of the true labels.
std::vector<double> true_label_scores(const Model& model, std::span<const Example> batch,
                                      ScoreKind kind);

GradEstimate naive_quantile_grad(const Model& model, std::span<const Example> batch_cal,
                                 double alpha, ScoreKind kind);

/// Indices with |score - tau_hat| <= epsilon, ascending.
std::vector<std::size_t> select_eps(std::span<const double> scores, double tau_hat, double epsilon);

struct RankSelection {
  std::vector<std::size_t> indices;  // ascending
  double effective_epsilon = 0.0;    // m-th smallest distance
};

/// The m samples nearest to tau_hat; distance ties go to the lower index.
RankSelection select_m_rank(std::span<const double> scores, double tau_hat, std::size_t m);

/// Mean score gradient over the selected indices; zero for an empty selection.
std::vector<double> eta_hat(const Model& model, std::span<const Example> batch_cal,
                            std::span<const std::size_t> selected, ScoreKind kind);

/// h'(ell) (dl/dtheta + dl/dtau eta_hat) + reg.
std::vector<double> plugin_gradient(const LossComponents& comp, const GradEstimate& eta,
                                    std::span<const double> reg);

/// tau_hat from the calibration scores, then the quantile gradient estimate.
GradEstimate estimate(const Model& model, std::span<const Example> batch_cal, double alpha,
                      ScoreKind kind, const EstimatorKind& estimator);

/// Same as `estimate` for the selection-based estimators, but with the window
/// centred on a caller-supplied threshold (e.g. the population quantile).
GradEstimate estimate_centered(const Model& model, std::span<const Example> batch_cal,
                               double center, ScoreKind kind, const EstimatorKind& estimator);

}  // namespace crm
