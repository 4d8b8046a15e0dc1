#include "crm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "crm/error.hpp"
#include "crm/rng.hpp"

namespace crm {

double accuracy(const Model& model, std::span<const Example> examples) {
  if (examples.empty()) throw InvalidArgument("accuracy of an empty set");
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const auto logits = model.forward(ex.x);
    const auto best = static_cast<std::size_t>(
        std::distance(logits.begin(), std::max_element(logits.begin(), logits.end())));
    correct += best == ex.y;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

CalibratedMetrics calibrate_and_predict(const Model& model, std::span<const Example> cal,
                                        std::span<const Example> test, double alpha,
                                        ScoreKind kind) {
  if (cal.empty() || test.empty()) throw InvalidArgument("calibration and test sets must be nonempty");
  const auto scores = true_label_scores(model, cal, kind);
  CalibratedMetrics out;
  out.tau = empirical_quantile(scores, alpha).tau;
  std::vector<PredictionSet> sets;
  std::vector<std::size_t> labels;
  sets.reserve(test.size());
  labels.reserve(test.size());
  for (const auto& ex : test) {
    sets.push_back(thr_set(model.forward(ex.x), out.tau, kind));
    labels.push_back(ex.y);
  }
  out.sets = set_metrics(sets, labels);
  return out;
}

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (const double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

EvalReport evaluate(const Model& model, const Dataset& cal_pool, const Dataset& test_pool,
                    double alpha, std::size_t trials, std::uint64_t seed, ScoreKind kind) {
  if (cal_pool.empty() || test_pool.empty()) throw InvalidArgument("evaluation pools must be nonempty");
  if (trials == 0) throw InvalidArgument("evaluation needs at least one trial");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");

  EvalReport report;
  report.alpha = alpha;
  report.accuracy = accuracy(model, test_pool.examples());

  // Scores of every label for every pooled example, computed once.
  const Dataset pool = Dataset::concat(cal_pool, test_pool, "pool");
  const std::size_t n = pool.size();
  const std::size_t n_cal = cal_pool.size();
  const std::size_t num_classes = model.output_dim();
  std::vector<double> scores(n * num_classes);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = all_scores(model.forward(pool.at(i).x), kind);
    std::copy(s.begin(), s.end(), scores.begin() + static_cast<std::ptrdiff_t>(i * num_classes));
  }
  const auto labels = pool.labels();

  const Rng root = Rng(seed).derive("eval");
  std::vector<std::vector<double>> class_cov(num_classes), class_size(num_classes);
  std::vector<double> coverages, sizes;
  std::vector<std::size_t> order(n);
  std::vector<double> cal_scores(n_cal);
  for (std::size_t t = 0; t < trials; ++t) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = root.derive(static_cast<std::uint64_t>(t));
    rng.shuffle(std::span<std::size_t>(order));

    for (std::size_t i = 0; i < n_cal; ++i) {
      const auto idx = order[i];
      cal_scores[i] = scores[idx * num_classes + labels[idx]];
    }
    const double tau = empirical_quantile(cal_scores, alpha).tau;

    std::vector<PredictionSet> sets;
    std::vector<std::size_t> test_labels;
    sets.reserve(n - n_cal);
    test_labels.reserve(n - n_cal);
    for (std::size_t i = n_cal; i < n; ++i) {
      const auto idx = order[i];
      PredictionSet set(num_classes);
      for (std::size_t k = 0; k < num_classes; ++k)
        if (scores[idx * num_classes + k] >= tau) set.insert(k);
      sets.push_back(std::move(set));
      test_labels.push_back(labels[idx]);
    }
    const auto m = set_metrics(sets, test_labels);
    report.trials.push_back({t, tau, m.coverage, m.avg_size});
    coverages.push_back(m.coverage);
    sizes.push_back(m.avg_size);
    for (std::size_t k = 0; k < num_classes; ++k) {
      if (m.class_count[k] == 0) continue;
      class_cov[k].push_back(m.class_coverage[k]);
      class_size[k].push_back(m.class_size[k]);
    }
  }

  report.coverage = mean_of(coverages);
  report.coverage_std = std_of(coverages);
  report.avg_size = mean_of(sizes);
  report.avg_size_std = std_of(sizes);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < num_classes; ++k) {
    report.class_coverage.push_back(class_cov[k].empty() ? nan : mean_of(class_cov[k]));
    report.class_size.push_back(class_size[k].empty() ? nan : mean_of(class_size[k]));
  }
  return report;
}

void EvalReport::write_trials_csv(std::ostream& out) const {
  out << "trial,coverage,avg_size\n" << std::setprecision(10);
  for (const auto& t : trials) out << t.trial << ',' << t.coverage << ',' << t.avg_size << '\n';
}

void EvalReport::write_per_class_csv(std::ostream& out) const {
  out << "class,coverage,avg_size\n" << std::setprecision(10);
  for (std::size_t k = 0; k < class_coverage.size(); ++k)
    out << k << ',' << class_coverage[k] << ',' << class_size[k] << '\n';
}

namespace {

double quantile_of_scores(const Model& model, const Dataset& draws, double alpha, ScoreKind kind,
                          std::size_t begin, std::size_t end, std::vector<double>& buffer) {
  buffer.resize(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const auto ex = draws.at(i);
    buffer[i - begin] = score(model.forward(ex.x), ex.y, kind);
  }
  return empirical_quantile(buffer, alpha).tau;
}

}  // namespace

OracleGradient oracle_quantile_grad(const Model& model, const Dataset& draws, double alpha,
                                    ScoreKind kind) {
  if (draws.empty()) throw InvalidArgument("oracle needs draws");
  constexpr std::size_t kGroups = 10;
  const std::size_t n = draws.size();
  const std::size_t group = n / kGroups;

  OracleGradient out;
  std::vector<double> buffer;
  out.tau = quantile_of_scores(model, draws, alpha, kind, 0, n, buffer);
  out.grad.assign(model.param_count(), 0.0);
  out.mc_err.assign(model.param_count(), 0.0);

  Model probe = model;
  auto params = probe.params();
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double theta = params[j];
    const double step = 1e-3 * std::max(1.0, std::abs(theta));
    // One full-sample difference and one per group, on identical draws.
    std::vector<double> plus(kGroups + 1), minus(kGroups + 1);
    params[j] = theta + step;
    plus[0] = quantile_of_scores(probe, draws, alpha, kind, 0, n, buffer);
    for (std::size_t g = 0; g < kGroups && group > 0; ++g)
      plus[g + 1] = quantile_of_scores(probe, draws, alpha, kind, g * group, (g + 1) * group, buffer);
    params[j] = theta - step;
    minus[0] = quantile_of_scores(probe, draws, alpha, kind, 0, n, buffer);
    for (std::size_t g = 0; g < kGroups && group > 0; ++g)
      minus[g + 1] = quantile_of_scores(probe, draws, alpha, kind, g * group, (g + 1) * group, buffer);
    params[j] = theta;

    out.grad[j] = (plus[0] - minus[0]) / (2.0 * step);
    if (group > 0) {
      std::vector<double> fd(kGroups);
      for (std::size_t g = 0; g < kGroups; ++g) fd[g] = (plus[g + 1] - minus[g + 1]) / (2.0 * step);
      // Group estimates use n/10 draws each; the full-sample estimate has
      // roughly the standard error of their mean.
      out.mc_err[j] = std_of(fd) / std::sqrt(static_cast<double>(kGroups));
    }
  }
  return out;
}

OracleGradient oracle_quantile_grad(const Model& model, const GmmSpec& spec, double alpha,
                                    ScoreKind kind, std::size_t n_mc) {
  if (n_mc < 100000) throw InvalidArgument("oracle needs at least 1e5 Monte-Carlo draws");
  GmmSpec draws_spec = spec;
  draws_spec.num_samples = n_mc;
  return oracle_quantile_grad(model, gen_gmm(draws_spec), alpha, kind);
}

VarianceProbe gradient_variance_probe(const Model& model, const Dataset& pool, std::size_t batch_size,
                                      double alpha, ScoreKind kind, const EstimatorKind& estimator,
                                      std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("variance probe needs at least 2 resamples");
  if (batch_size == 0 || batch_size > pool.size())
    throw InvalidArgument("probe batch size must lie in [1, pool size]");
  const Rng root = Rng(seed).derive("probe");
  std::vector<std::size_t> order(pool.size());
  std::vector<std::vector<double>> draws;
  VarianceProbe out;
  out.k = k;
  for (std::size_t r = 0; r < k; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = root.derive(r);
    rng.shuffle(std::span<std::size_t>(order));
    const auto batch = pool.examples(std::span<const std::size_t>(order.data(), batch_size));
    auto est = estimate(model, batch, alpha, kind, estimator);
    out.mean_selected += static_cast<double>(est.n_selected) / static_cast<double>(k);
    draws.push_back(std::move(est.eta_hat));
  }
  const std::size_t p = model.param_count();
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> col(k);
    for (std::size_t r = 0; r < k; ++r) col[r] = draws[r][j];
    const double sd = std_of(col);
    out.cov_trace += sd * sd;
  }
  return out;
}

WindowMoments window_moments(const Model& model, std::span<const Example> draws, double tau,
                             double epsilon, ScoreKind kind) {
  if (draws.empty()) throw InvalidArgument("window moments need draws");
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  const auto scores = true_label_scores(model, draws, kind);
  const auto selected = select_eps(scores, tau, epsilon);

  WindowMoments w;
  w.tau = tau;
  w.epsilon = epsilon;
  w.count = selected.size();
  w.p = static_cast<double>(selected.size()) / static_cast<double>(draws.size());
  w.q = 1.0 - w.p;
  const std::size_t p = model.param_count();
  w.eta.assign(p, 0.0);
  w.eta_se.assign(p, 0.0);
  if (selected.empty()) return w;

  std::vector<double> sum(p, 0.0), sumsq(p, 0.0);
  for (const auto i : selected) {
    const auto g = score_grad(model, draws[i], kind);
    for (std::size_t j = 0; j < p; ++j) {
      sum[j] += g[j];
      sumsq[j] += g[j] * g[j];
    }
  }
  const auto m = static_cast<double>(selected.size());
  for (std::size_t j = 0; j < p; ++j) {
    w.eta[j] = sum[j] / m;
    const double var = m > 1 ? std::max(0.0, (sumsq[j] - m * w.eta[j] * w.eta[j]) / (m - 1)) : 0.0;
    w.sigma_trace += var;
    w.eta_se[j] = std::sqrt(var / m);
  }
  return w;
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("slope needs two or more points");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw InvalidArgument("log-log slope of a nonpositive value");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = mean_of(lx), my = mean_of(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace crm
