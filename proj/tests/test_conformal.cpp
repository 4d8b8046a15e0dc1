#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "crm/conformal.hpp"
#include "crm/error.hpp"
#include "crm/rng.hpp"

using namespace crm;
using V = std::vector<double>;

TEST_CASE("scores of the three kinds") {
  CHECK(score(V{0, 0}, 0, ScoreKind::Probability) == doctest::Approx(0.5));
  CHECK(score(V{3, -1}, 0, ScoreKind::Logit) == 3.0);
  CHECK(score(V{0, 0, 0}, 2, ScoreKind::LogProbability) == doctest::Approx(std::log(1.0 / 3.0)));
  CHECK(score(V{0, 0, 0}, 2, ScoreKind::LogProbability) == doctest::Approx(-1.0986).epsilon(1e-4));
  CHECK_THROWS_AS((void)score(V{0, 0}, 2, ScoreKind::Logit), InvalidArgument);
}

TEST_CASE("log-probability survives huge logits") {
  const double lp = score(V{1000.0, 0.0}, 1, ScoreKind::LogProbability);
  CHECK(std::isfinite(lp));
  CHECK(lp == doctest::Approx(-1000.0));
  const auto sm = softmax(V{1000.0, 1000.0});
  CHECK(sm[0] == doctest::Approx(0.5));
}

TEST_CASE("score parsing") {
  CHECK(parse_score_kind("probability") == ScoreKind::Probability);
  CHECK(parse_score_kind("logit") == ScoreKind::Logit);
  CHECK(parse_score_kind("log_probability") == ScoreKind::LogProbability);
  CHECK(to_string(ScoreKind::LogProbability) == "log_probability");
  CHECK_THROWS_AS((void)parse_score_kind("aps"), InvalidArgument);
}

TEST_CASE("empirical quantile is the ceil(alpha n)-th order statistic") {
  const V s = {0.3, 0.1, 0.5, 0.2, 0.4};
  const auto q = empirical_quantile(s, 0.4);
  CHECK(q.tau == 0.2);
  CHECK(q.rank_index == 3);

  V ten(10);
  for (int i = 0; i < 10; ++i) ten[i] = 10.0 - i;
  CHECK(empirical_quantile(ten, 0.01).tau == 1.0);
  CHECK(empirical_quantile(V{4, 2, 9, 1, 3}, 0.999).tau == 9.0);
  CHECK(quantile_rank(5, 0.4) == 2);
  CHECK(quantile_rank(10, 0.01) == 1);
  CHECK(quantile_rank(5, 0.999) == 5);
  // alpha * n an exact integer in decimal but not in binary
  CHECK(quantile_rank(100, 0.07) == 7);
  CHECK(quantile_rank(1000, 0.1) == 100);
}

TEST_CASE("quantile ties go to the lowest index") {
  const auto q = empirical_quantile(V{2.0, 1.0, 1.0, 1.0}, 0.5);
  CHECK(q.tau == 1.0);
  CHECK(q.rank_index == 2);
  CHECK(empirical_quantile(V{1.0, 1.0}, 0.5).rank_index == 0);
}

TEST_CASE("quantile errors") {
  CHECK_THROWS_AS((void)empirical_quantile(V{}, 0.1), InvalidArgument);
  CHECK_THROWS_AS((void)empirical_quantile(V{1.0, std::nan("")}, 0.1), InvalidArgument);
  CHECK_THROWS_AS((void)empirical_quantile(V{1.0, INFINITY}, 0.1), InvalidArgument);
}

TEST_CASE("quantile value is permutation invariant") {
  Rng rng(9);
  V s(101);
  for (auto& x : s) x = rng.normal();
  const double tau = empirical_quantile(s, 0.1).tau;
  for (int r = 0; r < 5; ++r) {
    rng.shuffle(std::span<double>(s));
    CHECK(empirical_quantile(s, 0.1).tau == tau);
  }
}

TEST_CASE("threshold sets") {
  const V logits = {3, -1, 2};
  const auto all = thr_set(logits, std::numeric_limits<double>::lowest(), ScoreKind::Logit);
  CHECK(all.size() == 3);
  CHECK(thr_set(logits, 3.5, ScoreKind::Logit).size() == 0);
  CHECK(thr_set(logits, 2.0, ScoreKind::Logit) == PredictionSet({0, 2}, 3));
}

TEST_CASE("smooth sets") {
  ConformalConfig cfg;
  cfg.score_kind = ScoreKind::Logit;
  cfg.temperature = 0.5;
  const V logits = {1.0, 0.0};
  const auto s = smooth_set(logits, 1.0, cfg);
  CHECK(s.memberships[0] == doctest::Approx(0.5));
  const auto t = smooth_set(logits, 0.5, cfg);
  CHECK(t.memberships[0] == doctest::Approx(0.731059).epsilon(1e-6));
  cfg.temperature = (1.0 - 0.2) / 10.0;
  CHECK(smooth_set(logits, 0.2, cfg).memberships[0] > 0.999);
  for (const double m : smooth_set(V{50, -50, 0}, 0.0, cfg).memberships) {
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
  }
}

TEST_CASE("smooth sets harden into threshold sets as T shrinks") {
  Rng rng(12);
  for (int c = 0; c < 50; ++c) {
    V logits(5);
    for (auto& x : logits) x = rng.normal();
    const auto sc = all_scores(logits, ScoreKind::LogProbability);
    const double spread = *std::max_element(sc.begin(), sc.end()) - *std::min_element(sc.begin(), sc.end());
    const double tau = sc[0] + 0.3 * rng.normal();
    ConformalConfig cfg;
    cfg.temperature = 1e-6 * spread;
    const auto soft = smooth_set(logits, tau, cfg);
    PredictionSet rounded(5);
    for (std::size_t y = 0; y < 5; ++y)
      if (soft.memberships[y] >= 0.5) rounded.insert(y);
    CHECK(rounded == thr_set(logits, tau, ScoreKind::LogProbability));
  }
}

TEST_CASE("set metrics") {
  const std::vector<std::size_t> labels = {0, 0};
  std::vector<PredictionSet> full(2, PredictionSet({0, 1, 2}, 3));
  auto m = set_metrics(full, labels);
  CHECK(m.coverage == 1.0);
  CHECK(m.avg_size == 3.0);

  std::vector<PredictionSet> empty(2, PredictionSet(3));
  m = set_metrics(empty, labels);
  CHECK(m.coverage == 0.0);
  CHECK(m.avg_size == 0.0);

  std::vector<PredictionSet> mixed = {PredictionSet({0}, 2), PredictionSet({0, 1}, 2)};
  m = set_metrics(mixed, labels);
  CHECK(m.coverage == 1.0);
  CHECK(m.avg_size == 1.5);
  CHECK(m.class_coverage[0] == 1.0);
  CHECK(m.class_size[0] == 1.5);
  CHECK(std::isnan(m.class_coverage[1]));

  CHECK_THROWS_AS((void)set_metrics(std::vector<PredictionSet>{}, std::vector<std::size_t>{}), InvalidArgument);
  CHECK_THROWS((void)set_metrics(mixed, std::vector<std::size_t>{0}));
}

TEST_CASE("config validation") {
  ConformalConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.target_size = 1.5;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("split conformal coverage on exchangeable scores") {
  // calibrate on true-label scores, test on fresh draws of the same law
  int inside = 0;
  const double alpha = 0.1;
  const std::size_t n_cal = 20000, n_test = 10000;
  const double half = 2.5758293035489 * std::sqrt(alpha * (1 - alpha) / n_test);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = Rng(seed).derive("cov");
    V cal(n_cal);
    for (auto& x : cal) x = rng.uniform();
    const double tau = empirical_quantile(cal, alpha).tau;
    std::size_t covered = 0;
    for (std::size_t i = 0; i < n_test; ++i) covered += rng.uniform() >= tau;
    inside += std::abs(static_cast<double>(covered) / n_test - (1 - alpha)) <= half;
  }
  CHECK(inside >= 18);
}
