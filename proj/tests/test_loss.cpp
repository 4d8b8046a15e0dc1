#include <doctest.h>

#include <cmath>
#include <vector>

#include "crm/conformal.hpp"
#include "crm/error.hpp"
#include "crm/grad_est.hpp"
#include "crm/loss.hpp"
#include "crm/nn.hpp"
#include "crm/rng.hpp"
#include "support.hpp"

using namespace crm;

TEST_CASE("size loss hinge") {
  CHECK(size_loss(SmoothSet{{1.0, 1.0, 1.2}}, 1.0) == doctest::Approx(2.2));
  CHECK(size_loss(SmoothSet{{0.25, 0.25}}, 1.0) == 0.0);
  CHECK(size_loss(SmoothSet{{1.0, 1.0, 0.5}}, 0.0) == doctest::Approx(2.5));
}

TEST_CASE("size loss is monotone in every membership") {
  Rng rng(3);
  for (int c = 0; c < 50; ++c) {
    SmoothSet s{{rng.uniform(), rng.uniform(), rng.uniform()}};
    const double base = size_loss(s, 1.0);
    s.memberships[rng.below(3)] += 0.1;
    CHECK(size_loss(s, 1.0) >= base);
  }
}

TEST_CASE("inactive hinge gives zero components") {
  Model m = Model::linear(2, 3);
  const std::vector<double> x = {0.0, 0.0};
  const std::vector<Example> batch = {{x, 0}, {x, 1}};
  ConformalConfig cfg;
  cfg.score_kind = ScoreKind::Logit;
  cfg.target_size = 3.0;
  const auto c = loss_and_partials(m, 0.0, batch, cfg);
  CHECK(c.ell_bar == 0.0);
  CHECK(c.dl_dtau_bar == 0.0);
  CHECK(c.dl_dtheta_bar == std::vector<double>(m.param_count(), 0.0));
}

TEST_CASE("single example at the threshold") {
  Rng rng(8);
  Model m = Model::linear(2, 1);
  m.init_uniform(rng);
  const std::vector<double> x = {0.4, -0.3};
  const Example ex{x, 0};
  ConformalConfig cfg;
  cfg.temperature = 1.0;
  cfg.target_size = 0.0;
  cfg.size_weight = 1.0;
  cfg.score_kind = ScoreKind::Logit;
  const double tau = m.forward(x)[0];
  const auto c = loss_and_partials(m, tau, std::vector<Example>{ex}, cfg);
  CHECK(c.ell_bar == doctest::Approx(0.5));
  CHECK(c.dl_dtau_bar == doctest::Approx(-0.25));
  const auto de = score_grad(m, ex, ScoreKind::Logit);
  for (std::size_t j = 0; j < de.size(); ++j) CHECK(c.dl_dtheta_bar[j] == doctest::Approx(0.25 * de[j]));
}

TEST_CASE("loss partials match finite differences") {
  Rng root(17);
  for (std::size_t c = 0; c < 50; ++c) {
    Rng rng = root.derive(c);
    Model m = testing::random_mlp(rng);
    const std::size_t n = 2 + rng.below(8);
    std::vector<std::vector<double>> xs;
    for (std::size_t i = 0; i < n; ++i) xs.push_back(testing::random_vec(rng, m.input_dim()));
    std::vector<Example> batch;
    for (std::size_t i = 0; i < n; ++i) batch.push_back({xs[i], rng.below(m.output_dim())});
    ConformalConfig cfg;
    cfg.temperature = rng.uniform(0.2, 1.0);
    cfg.target_size = static_cast<double>(rng.below(2));
    cfg.size_weight = rng.uniform(0.1, 2.0);
    cfg.score_kind = static_cast<ScoreKind>(c % 3);
    const auto sc = true_label_scores(m, batch, cfg.score_kind);
    const double tau = sc[rng.below(n)] + 0.1 * rng.normal();

    const auto comp = loss_and_partials(m, tau, batch, cfg);
    CHECK(comp.ell_bar == doctest::Approx(mean_size_loss(m, tau, batch, cfg)).epsilon(1e-14));
    const auto fd = testing::fd_grad(m, [&] { return mean_size_loss(m, tau, batch, cfg); }, 1e-6);
    CHECK(testing::rel_error(comp.dl_dtheta_bar, fd) < 1e-5);
    const double h = 1e-6 * std::max(1.0, std::abs(tau));
    const double fd_tau = (mean_size_loss(m, tau + h, batch, cfg) - mean_size_loss(m, tau - h, batch, cfg)) / (2 * h);
    CHECK(std::abs(comp.dl_dtau_bar - fd_tau) <= 1e-5 * std::max(std::abs(fd_tau), 1e-8));
  }
}

TEST_CASE("loss rejects an empty batch") {
  const Model m = Model::linear(2, 2);
  CHECK_THROWS_AS((void)loss_and_partials(m, 0.0, std::vector<Example>{}, ConformalConfig{}), InvalidArgument);
}

TEST_CASE("h transform") {
  auto h = h_transform(1.0);
  CHECK(h.value == 0.0);
  CHECK(h.derivative == 1.0);
  h = h_transform(std::exp(1.0));
  CHECK(h.value == doctest::Approx(1.0));
  CHECK(h.derivative == doctest::Approx(std::exp(-1.0)));
  h = h_transform(0.0);
  CHECK(h.value == doctest::Approx(std::log(1e-8)));
  CHECK(h.derivative == doctest::Approx(1e8));
  CHECK_THROWS_AS((void)h_transform(-0.1), InvalidArgument);
  CHECK(h_transform(0.5).value < h_transform(0.6).value);
}

TEST_CASE("l2 regularizer") {
  Model m = Model::linear(1, 1);
  CHECK(reg_grad(m, 0.0) == std::vector<double>(2, 0.0));
  m.params()[0] = 1.0;
  CHECK(reg_grad(m, 0.5) == std::vector<double>{1.0, 0.0});
  CHECK(reg_value(m, 0.5) == 0.5);

  Rng rng(2);
  Model r = testing::random_mlp(rng);
  const auto an = reg_grad(r, 0.3);
  const auto fd = testing::fd_grad(r, [&] { return reg_value(r, 0.3); }, 1e-5);
  CHECK(testing::rel_error(an, fd) < 1e-8);
}

TEST_CASE("cross entropy gradient") {
  Rng rng(14);
  Model m = testing::random_mlp(rng);
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(testing::random_vec(rng, m.input_dim()));
  std::vector<Example> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({xs[i], rng.below(m.output_dim())});
  const auto ce = cross_entropy(m, batch);
  const auto fd = testing::fd_grad(m, [&] { return cross_entropy(m, batch).value; }, 1e-5);
  CHECK(testing::rel_error(ce.grad, fd) < 1e-6);
  CHECK(ce.value > 0.0);
}
