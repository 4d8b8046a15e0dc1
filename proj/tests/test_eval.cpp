#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "crm/data.hpp"
#include "crm/error.hpp"
#include "crm/eval.hpp"
#include "crm/grad_est.hpp"
#include "crm/rng.hpp"
#include "support.hpp"

using namespace crm;
using V = std::vector<double>;

const V kOracleFixture = {-0.54730386855172952, -0.03432316422657955, 3.4097851625911613,
                          -0.17154210791159308, -2.8539108675105229,  0.19015079200279672,
                          -0.15486561642452656, 0.96854014534719646,  -0.80152002064415306};

namespace {

Model seeded_linear(std::size_t d, std::size_t k, std::uint64_t seed) {
  Model m = Model::linear(d, k);
  Rng rng = Rng(seed).derive("init");
  m.init_uniform(rng);
  return m;
}

// one feature, one class, logit score = x
Model identity_score() {
  Model m = Model::linear(1, 1);
  m.params()[0] = 1.0;
  return m;
}

Dataset uniform_pool(std::size_t n, std::uint64_t seed) {
  Dataset ds("u", 1, 1);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) ds.push_back(V{rng.uniform()}, 0);
  return ds;
}

}  // namespace

TEST_CASE("accuracy by argmax") {
  Model m = Model::linear(1, 2);
  m.params()[0] = 1.0;
  m.params()[1] = -1.0;
  const V a = {1.0}, b = {-1.0};
  const std::vector<Example> ex = {{a, 0}, {b, 1}, {a, 1}, {b, 1}};
  CHECK(accuracy(m, ex) == 0.75);
}

TEST_CASE("separated toy gives singleton sets with full coverage") {
  Model m = Model::linear(1, 2);
  m.params()[0] = 1.0;
  m.params()[1] = -1.0;
  Dataset cal("c", 2, 1), test("t", 2, 1);
  for (int i = 0; i < 50; ++i) {
    cal.push_back(V{5.0}, 0);
    cal.push_back(V{-5.0}, 1);
    test.push_back(V{5.0}, 0);
    test.push_back(V{-5.0}, 1);
  }
  const auto rep = evaluate(m, cal, test, 0.1, 3, 0, ScoreKind::Logit);
  CHECK(rep.avg_size == 1.0);
  CHECK(rep.coverage == 1.0);
  CHECK(rep.accuracy == 1.0);
  CHECK(rep.trials.size() == 3);
  CHECK(rep.class_coverage == V{1.0, 1.0});
}

TEST_CASE("coverage of uniform scores sits in the binomial interval") {
  const Model m = identity_score();
  const auto rep = evaluate(m, uniform_pool(20000, 1), uniform_pool(10000, 2), 0.1, 1, 0, ScoreKind::Logit);
  const double half = 2.5758293035489 * std::sqrt(0.1 * 0.9 / 10000.0);
  CHECK(std::abs(rep.coverage - 0.9) <= half);
}

TEST_CASE("evaluation report csv and determinism") {
  const auto parts = split_dataset(gen_gmm(GmmSpec::default_spec(3000, 2)), {0, 1000, 2000}, 2);
  const Model m = seeded_linear(2, 3, 2);
  const auto a = evaluate(m, parts[1], parts[2], 0.1, 10, 5, ScoreKind::LogProbability);
  const auto b = evaluate(m, parts[1], parts[2], 0.1, 10, 5, ScoreKind::LogProbability);
  std::ostringstream ta, tb, pa;
  a.write_trials_csv(ta);
  b.write_trials_csv(tb);
  a.write_per_class_csv(pa);
  CHECK(ta.str() == tb.str());
  CHECK(ta.str().rfind("trial,coverage,avg_size\n", 0) == 0);
  CHECK(pa.str().rfind("class,coverage,avg_size\n", 0) == 0);
  CHECK(a.trials.size() == 10);
  CHECK(a.coverage_std > 0.0);
  CHECK(a.coverage >= 0.0);
  CHECK(a.coverage <= 1.0);
  CHECK(a.class_coverage.size() == 3);
  CHECK_THROWS_AS((void)evaluate(m, Dataset("e", 3, 2), parts[2], 0.1, 1, 0, ScoreKind::Logit), InvalidArgument);
  CHECK_THROWS_AS((void)evaluate(m, parts[1], parts[2], 0.1, 0, 0, ScoreKind::Logit), InvalidArgument);
}

TEST_CASE("oracle: a dead coordinate has zero gradient") {
  // every label is 0, so row 1 never touches the logit score
  Dataset draws("d", 2, 2);
  Rng rng(3);
  for (int i = 0; i < 20000; ++i) draws.push_back(V{rng.normal(), rng.normal()}, 0);
  const Model m = seeded_linear(2, 2, 3);
  const auto o = oracle_quantile_grad(m, draws, 0.1, ScoreKind::Logit);
  for (const std::size_t j : {2u, 3u, 5u}) CHECK(std::abs(o.grad[j]) <= 3.0 * o.mc_err[j] + 1e-12);
}

TEST_CASE("oracle: location family moves the quantile one-for-one") {
  Dataset draws("d", 1, 1);
  Rng rng(4);
  for (int i = 0; i < 100000; ++i) draws.push_back(V{rng.normal()}, 0);
  Model m = identity_score();
  m.params()[1] = 0.3;
  const auto o = oracle_quantile_grad(m, draws, 0.2, ScoreKind::Logit);
  CHECK(std::abs(o.grad[1] - 1.0) <= 3.0 * o.mc_err[1] + 1e-9);
  // d tau / d w is the alpha-quantile of x, about -0.8416
  CHECK(o.grad[0] == doctest::Approx(-0.8416).epsilon(0.02));
}

TEST_CASE("oracle on the default mixture matches the committed fixture") {
  const Model m = seeded_linear(2, 3, 0);
  const auto o = oracle_quantile_grad(m, GmmSpec::default_spec(0, 11), 0.1, ScoreKind::LogProbability, 1000000);
  const V fixture = kOracleFixture;
  REQUIRE(o.grad.size() == fixture.size());
  for (std::size_t j = 0; j < fixture.size(); ++j) {
    CHECK(o.grad[j] == doctest::Approx(fixture[j]).epsilon(1e-9));
  }
  CHECK_THROWS_AS((void)oracle_quantile_grad(m, GmmSpec::default_spec(0, 11), 0.1, ScoreKind::Logit, 1000),
                  InvalidArgument);
}

TEST_CASE("window moments") {
  const Model m = seeded_linear(2, 3, 1);
  const Dataset ds = gen_gmm(GmmSpec::default_spec(5000, 1));
  const auto ex = ds.examples();
  const auto scores = true_label_scores(m, ex, ScoreKind::LogProbability);
  const double tau = empirical_quantile(scores, 0.1).tau;
  const auto w = window_moments(m, ex, tau, 0.05, ScoreKind::LogProbability);
  const auto sel = select_eps(scores, tau, 0.05);
  CHECK(w.count == sel.size());
  CHECK(w.p == doctest::Approx(static_cast<double>(sel.size()) / 5000.0));
  CHECK(w.p + w.q == doctest::Approx(1.0));
  const auto eta = eta_hat(m, ex, sel, ScoreKind::LogProbability);
  CHECK(testing::rel_error(w.eta, eta) < 1e-12);
  CHECK(w.sigma_trace > 0.0);
  CHECK_THROWS_AS((void)window_moments(m, ex, tau, 0.0, ScoreKind::LogProbability), InvalidArgument);
}

TEST_CASE("log-log slope") {
  const V x = {10, 100, 1000}, y = {1.0, 0.1, 0.01};
  CHECK(log_log_slope(x, y) == doctest::Approx(-1.0));
  CHECK_THROWS_AS((void)log_log_slope(V{1.0}, V{1.0}), InvalidArgument);
  CHECK_THROWS_AS((void)log_log_slope(V{1.0, 2.0}, V{1.0, 0.0}), InvalidArgument);
}

TEST_CASE("small study is reproducible and reports every check") {
  StudyConfig cfg;
  cfg.batch_sizes = {50, 100, 1000};
  cfg.trials = 200;
  cfg.oracle_draws = 20000;
  cfg.bias_check_sizes = {2};
  cfg.bias_check_trials = 500;
  cfg.cov_check_sizes = {50, 1000};
  cfg.seed = 3;
  const Model m = seeded_linear(2, 3, 3);
  const auto spec = GmmSpec::default_spec(0, 3);
  const auto a = estimator_study(m, spec, cfg);
  const auto b = estimator_study(m, spec, cfg);
  std::ostringstream sa, sb, ca;
  a.write_csv(sa);
  b.write_csv(sb);
  a.write_checks_csv(ca);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("estimator,n,bias_norm,cov_trace,mc_err\n", 0) == 0);
  CHECK(a.rows.size() == 9);
  std::vector<std::string> names;
  for (const auto& c : a.checks) names.push_back(c.name);
  for (const char* want : {"bias_identity_oracle_tau_n2", "bias_identity_estimated_tau_n2", "covariance_bound_n50",
                           "covariance_bound_n1000", "eps_cov_slope", "naive_variance_ratio", "eps_variance_ratio"})
    CHECK(std::find(names.begin(), names.end(), want) != names.end());
  for (const auto& c : a.checks)
    if (c.name.rfind("bias_identity_estimated", 0) == 0) CHECK(!c.gating);
  for (const auto& r : a.rows)
    if (r.estimator == "naive") CHECK(r.mean_selected == 1.0);

  cfg.trials = 10;
  CHECK_THROWS_AS((void)estimator_study(m, spec, cfg), InvalidArgument);
  cfg.trials = 200;
  cfg.batch_sizes = {};
  CHECK_THROWS_AS((void)estimator_study(m, spec, cfg), InvalidArgument);
}

TEST_CASE("variance probe") {
  const Model m = seeded_linear(2, 3, 6);
  const Dataset pool = gen_gmm(GmmSpec::default_spec(5000, 6));
  const auto naive = gradient_variance_probe(m, pool, 500, 0.1, ScoreKind::LogProbability, Naive{}, 32, 1);
  const auto vr = gradient_variance_probe(m, pool, 500, 0.1, ScoreKind::LogProbability, MRanking{50}, 32, 1);
  CHECK(naive.k == 32);
  CHECK(naive.mean_selected == 1.0);
  CHECK(vr.mean_selected == 50.0);
  CHECK(vr.cov_trace < naive.cov_trace);
  const auto again = gradient_variance_probe(m, pool, 500, 0.1, ScoreKind::LogProbability, Naive{}, 32, 1);
  CHECK(again.cov_trace == naive.cov_trace);
  CHECK_THROWS_AS((void)gradient_variance_probe(m, pool, 500, 0.1, ScoreKind::LogProbability, Naive{}, 1, 1),
                  InvalidArgument);
  CHECK_THROWS_AS((void)gradient_variance_probe(m, pool, 6000, 0.1, ScoreKind::LogProbability, Naive{}, 4, 1),
                  InvalidArgument);
}
