#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "crm/conformal.hpp"
#include "crm/data.hpp"
#include "crm/grad_est.hpp"
#include "crm/nn.hpp"

namespace crm {

/// Fraction of examples whose argmax logit is the true label.
double accuracy(const Model& model, std::span<const Example> examples);

struct CalibratedMetrics {
  double tau = 0.0;
  SetMetrics sets;
};

/// Calibrate tau on the true-label scores of `cal`, then predict THR sets on `test`.
CalibratedMetrics calibrate_and_predict(const Model& model, std::span<const Example> cal,
                                        std::span<const Example> test, double alpha, ScoreKind kind);

struct TrialMetrics {
  std::size_t trial = 0;
  double tau = 0.0;
  double coverage = 0.0;
  double avg_size = 0.0;
};

struct EvalReport {
  double accuracy = 0.0;
  double avg_size = 0.0;
  double avg_size_std = 0.0;
  double coverage = 0.0;
  double coverage_std = 0.0;
  std::vector<double> class_coverage;  // mean over trials
  std::vector<double> class_size;
  std::vector<TrialMetrics> trials;
  double alpha = 0.0;

  void write_trials_csv(std::ostream& out) const;     // trial,coverage,avg_size
  void write_per_class_csv(std::ostream& out) const;  // class,coverage,avg_size
};

/// Random calibration/test resplits of the merged pools at their original
/// sizes; each trial uses the sub-stream (seed, trial).
EvalReport evaluate(const Model& model, const Dataset& cal_pool, const Dataset& test_pool,
                    double alpha, std::size_t trials, std::uint64_t seed, ScoreKind kind);

struct OracleGradient {
  std::vector<double> grad;    // d tau / d theta
  std::vector<double> mc_err;  // standard error per coordinate, from 10 disjoint groups
  double tau = 0.0;            // population quantile on the draws
};

/// Central finite differences of theta -> alpha-quantile of the true-label
/// scores over a fixed set of draws (common random numbers). The step of
/// coordinate j is 1e-3 * max(1, |theta_j|).
OracleGradient oracle_quantile_grad(const Model& model, const Dataset& draws, double alpha,
                                    ScoreKind kind);

/// Same, on n_mc fresh draws from the GMM (seeded by the spec).
OracleGradient oracle_quantile_grad(const Model& model, const GmmSpec& spec, double alpha,
                                    ScoreKind kind, std::size_t n_mc);

/// Spread of the quantile-gradient estimate at a fixed model: the estimator
/// rerun on k batches resampled without replacement from `pool`.
struct VarianceProbe {
  double cov_trace = 0.0;
  double mean_selected = 0.0;
  std::size_t k = 0;
};

VarianceProbe gradient_variance_probe(const Model& model, const Dataset& pool, std::size_t batch_size,
                                      double alpha, ScoreKind kind, const EstimatorKind& estimator,
                                      std::size_t k = 32, std::uint64_t seed = 0);

/// Moments of the score gradient restricted to the window |E - tau| <= eps.
struct WindowMoments {
  double tau = 0.0;
  double epsilon = 0.0;
  double p = 0.0;  // P(window)
  double q = 0.0;  // 1 - p
  std::size_t count = 0;
  std::vector<double> eta;     // conditional mean
  std::vector<double> eta_se;  // its standard error
  double sigma_trace = 0.0;    // trace of the conditional covariance
};

WindowMoments window_moments(const Model& model, std::span<const Example> draws, double tau,
                             double epsilon, ScoreKind kind);

struct StudyConfig {
  double alpha = 0.1;
  ScoreKind kind = ScoreKind::LogProbability;
  /// An EpsThreshold with epsilon <= 0 uses the fixed epsilon derived from
  /// `window_mass`.
  std::vector<EstimatorKind> estimators = {Naive{}, EpsThreshold{0.0}, MRanking{6}};
  std::vector<std::size_t> batch_sizes = {50, 100, 200, 500, 1000};
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
  std::size_t oracle_draws = 1000000;
  /// Fraction of the population inside the fixed-epsilon window.
  double window_mass = 0.1;
  /// Explicit epsilon; <= 0 means derive from window_mass.
  double epsilon = 0.0;
  std::vector<std::size_t> bias_check_sizes = {2, 5, 20};
  std::size_t bias_check_trials = 100000;
  std::vector<std::size_t> cov_check_sizes = {50, 200, 1000};
  double slope_min = -1.35;
  double slope_max = -0.65;
  double naive_ratio_min = 0.5;
  double vr_ratio_max = 0.2;

  void validate() const;
};

struct StudyRow {
  std::string estimator;
  std::size_t n = 0;
  std::string center;  // "estimated" (tau_hat from the batch) or "oracle"
  std::vector<double> mean;
  std::vector<double> mean_se;  // standard error of each mean coordinate
  std::vector<double> bias;     // mean - oracle gradient
  double bias_norm = 0.0;
  double cov_trace = 0.0;
  double mc_err = 0.0;  // standard error of cov_trace
  double mean_selected = 0.0;
  std::size_t trials = 0;
};

struct StudyCheck {
  std::string name;
  bool gating = true;  // descriptive checks are reported but never fail a run
  bool passed = false;
  double value = 0.0;
  double bound = 0.0;
  std::string detail;
};

struct StudyReport {
  OracleGradient oracle;
  WindowMoments window;
  std::vector<StudyRow> rows;    // the estimator x batch-size grid
  std::vector<StudyRow> theory;  // cells behind the theorem checks
  std::vector<StudyCheck> checks;
  std::size_t trials = 0;
  std::uint64_t seed = 0;

  bool all_passed() const;
  void write_csv(std::ostream& out) const;  // estimator,n,bias_norm,cov_trace,mc_err
  void write_checks_csv(std::ostream& out) const;
};

/// Bias/variance study of the quantile-gradient estimators on a GMM.
StudyReport estimator_study(const Model& model, const GmmSpec& spec, const StudyConfig& config);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(std::span<const double> x, std::span<const double> y);

}  // namespace crm
