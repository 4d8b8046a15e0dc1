#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "crm/error.hpp"
#include "crm/eval.hpp"
#include "crm/rng.hpp"

namespace crm {

void StudyConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("study alpha must lie in (0, 1)");
  if (estimators.empty()) throw InvalidArgument("study needs at least one estimator");
  if (batch_sizes.empty()) throw InvalidArgument("study needs at least one batch size");
  if (trials < 100) throw InvalidArgument("study needs at least 100 trials");
  if (bias_check_trials < 100) throw InvalidArgument("bias check needs at least 100 trials");
  if (oracle_draws < 10000) throw InvalidArgument("oracle needs at least 1e4 draws");
  if (!(window_mass > 0.0 && window_mass < 1.0)) throw InvalidArgument("window mass must lie in (0, 1)");
  for (const auto n : batch_sizes)
    if (n == 0) throw InvalidArgument("batch sizes must be positive");
  for (const auto& e : estimators)
    if (const auto* m = std::get_if<MRanking>(&e))
      for (const auto n : batch_sizes)
        if (m->m > n)
          throw InvalidArgument("m-ranking with m = " + std::to_string(m->m) +
                                " does not fit batch size " + std::to_string(n));
}

bool StudyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const StudyCheck& c) { return !c.gating || c.passed; });
}

void StudyReport::write_csv(std::ostream& out) const {
  out << "estimator,n,bias_norm,cov_trace,mc_err\n" << std::setprecision(10);
  for (const auto& r : rows)
    out << r.estimator << ',' << r.n << ',' << r.bias_norm << ',' << r.cov_trace << ',' << r.mc_err
        << '\n';
}

void StudyReport::write_checks_csv(std::ostream& out) const {
  out << "check,gating,passed,value,bound\n" << std::setprecision(10);
  for (const auto& c : checks)
    out << c.name << ',' << (c.gating ? 1 : 0) << ',' << (c.passed ? 1 : 0) << ',' << c.value << ','
        << c.bound << '\n';
}

namespace {

// Running sums over the trial estimates of one (estimator, n, centering) cell.
class CellAccumulator {
 public:
  explicit CellAccumulator(std::size_t dim) : dim_(dim) {}

  void add(const GradEstimate& est) {
    samples_.insert(samples_.end(), est.eta_hat.begin(), est.eta_hat.end());
    selected_ += static_cast<double>(est.n_selected);
    ++count_;
  }

  StudyRow finish(std::string estimator, std::size_t n, std::string center,
                  std::span<const double> oracle) const {
    StudyRow row;
    row.estimator = std::move(estimator);
    row.n = n;
    row.center = std::move(center);
    row.trials = count_;
    const auto t = static_cast<double>(count_);
    row.mean.assign(dim_, 0.0);
    for (std::size_t i = 0; i < count_; ++i)
      for (std::size_t j = 0; j < dim_; ++j) row.mean[j] += samples_[i * dim_ + j];
    for (auto& v : row.mean) v /= t;

    // Per-trial squared deviation; its mean (with the n-1 correction) is the
    // covariance trace and its spread gives the Monte-Carlo error.
    std::vector<double> dev(count_, 0.0);
    for (std::size_t i = 0; i < count_; ++i)
      for (std::size_t j = 0; j < dim_; ++j) {
        const double d = samples_[i * dim_ + j] - row.mean[j];
        dev[i] += d * d;
      }
    double sum = 0.0;
    for (const double d : dev) sum += d;
    const double mean_dev = sum / t;
    double ss = 0.0;
    for (const double d : dev) ss += (d - mean_dev) * (d - mean_dev);
    const double correction = t / (t - 1.0);
    row.cov_trace = mean_dev * correction;
    row.mc_err = std::sqrt(ss / (t - 1.0) / t) * correction;

    row.mean_se.assign(dim_, 0.0);
    for (std::size_t i = 0; i < count_; ++i)
      for (std::size_t j = 0; j < dim_; ++j) {
        const double d = samples_[i * dim_ + j] - row.mean[j];
        row.mean_se[j] += d * d;
      }
    for (auto& v : row.mean_se) v = std::sqrt(v / (t - 1.0) / t);

    row.bias.assign(dim_, 0.0);
    double norm2 = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      row.bias[j] = row.mean[j] - (oracle.empty() ? 0.0 : oracle[j]);
      norm2 += row.bias[j] * row.bias[j];
    }
    row.bias_norm = std::sqrt(norm2);
    row.mean_selected = selected_ / t;
    return row;
  }

 private:
  std::size_t dim_;
  std::vector<double> samples_;
  double selected_ = 0.0;
  std::size_t count_ = 0;
};

// Draws the batch of trial `trial` at size n. Every estimator sees the same
// batch, and the batch depends only on (seed, purpose, n, trial).
void draw_batch(const GmmSampler& sampler, const Rng& stream, std::size_t n, std::size_t trial,
                Dataset& batch) {
  batch = Dataset("batch", batch.num_classes(), batch.feature_dim());
  Rng rng = stream.derive(static_cast<std::uint64_t>(n)).derive(static_cast<std::uint64_t>(trial));
  sampler.draw_into(rng, n, batch);
}

const StudyRow* find_row(const std::vector<StudyRow>& rows, const std::string& estimator,
                         std::size_t n) {
  for (const auto& r : rows)
    if (r.estimator == estimator && r.n == n) return &r;
  return nullptr;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

}  // namespace

StudyReport estimator_study(const Model& model, const GmmSpec& spec, const StudyConfig& config) {
  config.validate();
  spec.validate();
  if (model.input_dim() != spec.feature_dim())
    throw DimensionError("study model input", spec.feature_dim(), model.input_dim());
  if (model.output_dim() != spec.num_classes())
    throw DimensionError("study model classes", spec.num_classes(), model.output_dim());

  StudyReport report;
  report.trials = config.trials;
  report.seed = config.seed;
  const std::size_t dim = model.param_count();
  const Rng root = Rng(config.seed).derive("study");
  const GmmSampler sampler(spec);

  // Oracle quantities from one large common-random-number sample.
  Dataset draws("oracle", spec.num_classes(), spec.feature_dim());
  {
    Rng rng = root.derive("oracle");
    sampler.draw_into(rng, config.oracle_draws, draws);
  }
  report.oracle = oracle_quantile_grad(model, draws, config.alpha, config.kind);
  const double tau = report.oracle.tau;

  double epsilon = config.epsilon;
  if (!(epsilon > 0.0)) {
    const auto scores = true_label_scores(model, draws.examples(), config.kind);
    std::vector<double> dist(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) dist[i] = std::abs(scores[i] - tau);
    const auto k = static_cast<std::size_t>(config.window_mass * static_cast<double>(dist.size()));
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    epsilon = dist[k];
  }
  report.window = window_moments(model, draws.examples(), tau, epsilon, config.kind);
  const auto& win = report.window;

  std::vector<EstimatorKind> estimators;
  std::vector<std::string> names;
  for (auto e : config.estimators) {
    if (auto* eps = std::get_if<EpsThreshold>(&e); eps && !(eps->epsilon > 0.0)) eps->epsilon = epsilon;
    names.push_back(to_string(e));
    estimators.push_back(e);
  }

  // Estimator grid, tau_hat estimated from each batch.
  Dataset batch("batch", spec.num_classes(), spec.feature_dim());
  const Rng grid_stream = root.derive("grid");
  for (const auto n : config.batch_sizes) {
    std::vector<CellAccumulator> cells(estimators.size(), CellAccumulator(dim));
    for (std::size_t t = 0; t < config.trials; ++t) {
      draw_batch(sampler, grid_stream, n, t, batch);
      const auto examples = batch.examples();
      for (std::size_t e = 0; e < estimators.size(); ++e)
        cells[e].add(estimate(model, examples, config.alpha, config.kind, estimators[e]));
    }
    for (std::size_t e = 0; e < estimators.size(); ++e)
      report.rows.push_back(cells[e].finish(names[e], n, "estimated", report.oracle.grad));
  }

  // Theorem cells: fixed-epsilon window centred on the population quantile.
  const EstimatorKind fixed_eps = EpsThreshold{epsilon};
  const std::string fixed_name = to_string(fixed_eps);
  const auto run_cell = [&](std::size_t n, std::size_t trials, bool oracle_center,
                            const Rng& stream) {
    CellAccumulator cell(dim);
    for (std::size_t t = 0; t < trials; ++t) {
      draw_batch(sampler, stream, n, t, batch);
      const auto examples = batch.examples();
      cell.add(oracle_center ? estimate_centered(model, examples, tau, config.kind, fixed_eps)
                             : estimate(model, examples, config.alpha, config.kind, fixed_eps));
    }
    return cell.finish(fixed_name, n, oracle_center ? "oracle" : "estimated", report.oracle.grad);
  };

  // (i) E[eta_hat] = (1 - q^n) eta_eps, componentwise within 3 standard
  // errors. Gating with the oracle-centred window, descriptive with tau_hat.
  const Rng bias_stream = root.derive("bias-check");
  for (const bool oracle_center : {true, false}) {
    for (const auto n : config.bias_check_sizes) {
      auto row = run_cell(n, config.bias_check_trials, oracle_center, bias_stream);
      const double nn = static_cast<double>(n);
      const double shrink = 1.0 - std::pow(win.q, nn);
      // p is itself estimated from the oracle draws
      const double shrink_se = nn * std::pow(win.q, nn - 1.0) *
                               std::sqrt(win.p * win.q / static_cast<double>(config.oracle_draws));
      double worst_z = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double se_ref = std::hypot(shrink * win.eta_se[j], shrink_se * win.eta[j]);
        const double se = std::sqrt(row.mean_se[j] * row.mean_se[j] + se_ref * se_ref);
        const double diff = std::abs(row.mean[j] - shrink * win.eta[j]);
        const double z = se > 0.0 ? diff / se : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        worst_z = std::max(worst_z, z);
      }
      StudyCheck check;
      check.name = std::string("bias_identity_") + (oracle_center ? "oracle" : "estimated") +
                   "_tau_n" + std::to_string(n);
      check.gating = oracle_center;
      check.value = worst_z;
      check.bound = 3.0;
      check.passed = worst_z <= 3.0;
      check.detail = "max |mean - (1-q^n) eta_eps| / SE = " + fmt(worst_z) + " (q^n = " +
                     fmt(std::pow(win.q, static_cast<double>(n))) + ")";
      report.checks.push_back(std::move(check));
      report.theory.push_back(std::move(row));
    }
  }

  // (ii) trace cov <= trace(2 Sigma_eps / (p n)) + q^n |eta_eps|^2 + 3 MC error.
  const Rng cov_stream = root.derive("cov-check");
  double eta_norm2 = 0.0;
  for (const double v : win.eta) eta_norm2 += v * v;
  std::vector<double> ns, traces;
  for (const auto n : config.cov_check_sizes) {
    auto row = run_cell(n, config.trials, true, cov_stream);
    const double qn = std::pow(win.q, static_cast<double>(n));
    const double bound = 2.0 * win.sigma_trace / (win.p * static_cast<double>(n)) + qn * eta_norm2;
    StudyCheck check;
    check.name = "covariance_bound_n" + std::to_string(n);
    check.value = row.cov_trace;
    check.bound = bound + 3.0 * row.mc_err;
    check.passed = check.value <= check.bound;
    check.detail = "trace " + fmt(row.cov_trace) + " vs bound " + fmt(bound) + " + 3*" + fmt(row.mc_err);
    report.checks.push_back(std::move(check));
    ns.push_back(static_cast<double>(n));
    traces.push_back(row.cov_trace);
    report.theory.push_back(std::move(row));
  }
  if (ns.size() >= 2) {
    // Slope with the practical estimator: fixed epsilon around tau_hat.
    std::vector<double> est_traces;
    for (const auto n : config.cov_check_sizes) {
      const StudyRow* r = find_row(report.rows, fixed_name, n);
      est_traces.push_back(r ? r->cov_trace : run_cell(n, config.trials, false, grid_stream).cov_trace);
    }
    const double slope = log_log_slope(ns, est_traces);
    StudyCheck check;
    check.name = "eps_cov_slope";
    check.value = slope;
    check.bound = config.slope_max;
    check.passed = slope >= config.slope_min && slope <= config.slope_max;
    check.detail = "log-log slope of covariance trace vs n = " + fmt(slope) + ", required in [" +
                   fmt(config.slope_min) + ", " + fmt(config.slope_max) + "]";
    report.checks.push_back(std::move(check));
  }

  // Non-vanishing variance of the naive estimator against the shrinking
  // variance of the fixed-epsilon estimator between n = 100 and n = 1000.
  const auto ratio_check = [&](const std::string& estimator, const std::string& name, bool at_least,
                               double limit) {
    const StudyRow* small = find_row(report.rows, estimator, 100);
    const StudyRow* large = find_row(report.rows, estimator, 1000);
    if (!small || !large) return;
    StudyCheck check;
    check.name = name;
    check.value = large->cov_trace / small->cov_trace;
    check.bound = limit;
    check.passed = at_least ? check.value >= limit : check.value <= limit;
    check.detail = "trace(n=1000)/trace(n=100) = " + fmt(check.value) + (at_least ? " >= " : " <= ") +
                   fmt(limit);
    report.checks.push_back(std::move(check));
  };
  ratio_check("naive", "naive_variance_ratio", true, config.naive_ratio_min);
  ratio_check(fixed_name, "eps_variance_ratio", false, config.vr_ratio_max);
  return report;
}

}  // namespace crm
