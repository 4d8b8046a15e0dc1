#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crm {

/// Which conformity score E(x, y) a predictor uses.
enum class ScoreKind : std::uint8_t { Probability, Logit, LogProbability };

std::string to_string(ScoreKind kind);
ScoreKind parse_score_kind(std::string_view name);

struct ConformalConfig {
  double alpha = 0.01;        // miscoverage rate
  double temperature = 0.5;   // sigmoid temperature of the smooth sets
  double target_size = 1.0;   // kappa in max(0, |C| - kappa)
  double size_weight = 1.0;   // scales the size loss before the log transform
  double reg_weight = 0.0;    // lambda of the L2 regularizer
  ScoreKind score_kind = ScoreKind::LogProbability;
  double base_loss_weight = 0.0;  // optional cross-entropy term, off by default

  /// Throws InvalidArgument on out-of-range fields.
  void validate() const;
};

/// Hard THR prediction set as a membership mask over the K labels.
class PredictionSet {
 public:
  PredictionSet() = default;
  explicit PredictionSet(std::size_t num_classes) : members_(num_classes, 0) {}
  PredictionSet(std::initializer_list<std::size_t> labels, std::size_t num_classes);

  std::size_t num_classes() const noexcept { return members_.size(); }
  bool contains(std::size_t label) const { return label < members_.size() && members_[label]; }
  void insert(std::size_t label);
  std::size_t size() const noexcept;

  bool operator==(const PredictionSet&) const = default;

 private:
  std::vector<std::uint8_t> members_;
};

struct SmoothSet {
  std::vector<double> memberships;

  double size() const noexcept;
};

/// Conformity score of label y under the given logits.
double score(std::span<const double> logits, std::size_t label, ScoreKind kind);
/// Scores of every label.
std::vector<double> all_scores(std::span<const double> logits, ScoreKind kind);
/// dE(y)/dlogits, the logit-space cotangent that turns into a parameter
/// gradient through a vector-Jacobian product.
std::vector<double> score_logit_grad(std::span<const double> logits, std::size_t label,
                                     ScoreKind kind);

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);
double sigmoid(double u) noexcept;

struct Quantile {
  double tau = 0.0;
  std::size_t rank_index = 0;  // original position of the order statistic
};

/// 1-based rank ceil(alpha * n) of the order statistic used as the quantile.
std::size_t quantile_rank(std::size_t n, double alpha);

/// tau_hat = E_(ceil(alpha n)); ties are ordered by original index.
Quantile empirical_quantile(std::span<const double> scores, double alpha);

/// Labels whose score is >= tau.
PredictionSet thr_set(std::span<const double> logits, double tau, ScoreKind kind);

/// Memberships sigmoid((E_y - tau) / T).
SmoothSet smooth_set(std::span<const double> logits, double tau, const ConformalConfig& config);

struct SetMetrics {
  double coverage = 0.0;
  double avg_size = 0.0;
  std::vector<double> class_coverage;  // NaN for classes without examples
  std::vector<double> class_size;
  std::vector<std::size_t> class_count;
};

SetMetrics set_metrics(std::span<const PredictionSet> sets, std::span<const std::size_t> labels);

}  // namespace crm
