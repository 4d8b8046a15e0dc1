#include "crm/grad_est.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "crm/error.hpp"

namespace crm {

std::string to_string(const EstimatorKind& kind) {
  struct Visitor {
    std::string operator()(const Naive&) const { return "naive"; }
    std::string operator()(const EpsThreshold& e) const {
      char buf[64];
      const auto res = std::to_chars(buf, buf + sizeof buf, e.epsilon);
      return "eps:" + std::string(buf, res.ptr);
    }
    std::string operator()(const MRanking& m) const { return "mrank:" + std::to_string(m.m); }
  };
  return std::visit(Visitor{}, kind);
}

EstimatorKind parse_estimator(std::string_view text) {
  if (text == "naive") return Naive{};
  const auto colon = text.find(':');
  const auto head = text.substr(0, colon);
  const auto tail = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  if (head == "eps" && !tail.empty()) {
    double eps = 0.0;
    const auto res = std::from_chars(tail.data(), tail.data() + tail.size(), eps);
    if (res.ec == std::errc{} && res.ptr == tail.data() + tail.size() && eps > 0.0)
      return EpsThreshold{eps};
  } else if (head == "mrank" && !tail.empty()) {
    std::size_t m = 0;
    const auto res = std::from_chars(tail.data(), tail.data() + tail.size(), m);
    if (res.ec == std::errc{} && res.ptr == tail.data() + tail.size() && m >= 1) return MRanking{m};
  }
  throw InvalidArgument("invalid estimator '" + std::string(text) +
                        "' (expected naive, eps:<epsilon> or mrank:<m>)");
}

std::vector<double> true_label_scores(const Model& model, std::span<const Example> batch,
                                      ScoreKind kind) {
  std::vector<double> scores;
  scores.reserve(batch.size());
  for (const auto& ex : batch) scores.push_back(score(model.forward(ex.x), ex.y, kind));
  return scores;
}

GradEstimate naive_quantile_grad(const Model& model, std::span<const Example> batch_cal,
                                 double alpha, ScoreKind kind) {
  if (batch_cal.empty()) throw InvalidArgument("quantile gradient of an empty batch");
  const auto scores = true_label_scores(model, batch_cal, kind);
  const auto q = empirical_quantile(scores, alpha);
  return {score_grad(model, batch_cal[q.rank_index], kind), 1, 0.0, q.tau};
}

std::vector<std::size_t> select_eps(std::span<const double> scores, double tau_hat, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (std::abs(scores[i] - tau_hat) <= epsilon) selected.push_back(i);
  return selected;
}

RankSelection select_m_rank(std::span<const double> scores, double tau_hat, std::size_t m) {
  if (m == 0) throw InvalidArgument("m-ranking needs m >= 1");
  if (m > scores.size())
    throw InvalidArgument("m-ranking with m = " + std::to_string(m) + " exceeds batch size " +
                          std::to_string(scores.size()));
  std::vector<double> dist(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) dist[i] = std::abs(scores[i] - tau_hat);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto closer = [&](std::size_t a, std::size_t b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m - 1), order.end(),
                   closer);
  RankSelection sel;
  sel.effective_epsilon = dist[order[m - 1]];
  sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

std::vector<double> eta_hat(const Model& model, std::span<const Example> batch_cal,
                            std::span<const std::size_t> selected, ScoreKind kind) {
  std::vector<double> eta(model.param_count(), 0.0);
  if (selected.empty()) return eta;
  const double scale = 1.0 / static_cast<double>(selected.size());
  for (const auto i : selected) {
    if (i >= batch_cal.size()) throw DimensionError("selected index", batch_cal.size(), i);
    const auto& ex = batch_cal[i];
    const auto logits = model.forward(ex.x);
    model.accumulate_vjp(ex.x, score_logit_grad(logits, ex.y, kind), scale, eta);
  }
  return eta;
}

std::vector<double> plugin_gradient(const LossComponents& comp, const GradEstimate& eta,
                                    std::span<const double> reg) {
  const std::size_t p = comp.dl_dtheta_bar.size();
  if (eta.eta_hat.size() != p) throw DimensionError("quantile gradient", p, eta.eta_hat.size());
  if (reg.size() != p) throw DimensionError("regularizer gradient", p, reg.size());
  const double h_prime = h_transform(comp.ell_bar).derivative;
  std::vector<double> grad(p);
  for (std::size_t j = 0; j < p; ++j)
    grad[j] = h_prime * (comp.dl_dtheta_bar[j] + comp.dl_dtau_bar * eta.eta_hat[j]) + reg[j];
  return grad;
}

namespace {

GradEstimate select_and_average(const Model& model, std::span<const Example> batch_cal,
                                std::span<const double> scores, double center, ScoreKind kind,
                                const EstimatorKind& estimator) {
  GradEstimate out;
  out.tau_hat = center;
  if (const auto* e = std::get_if<EpsThreshold>(&estimator)) {
    const auto sel = select_eps(scores, center, e->epsilon);
    out.eta_hat = eta_hat(model, batch_cal, sel, kind);
    out.n_selected = sel.size();
    out.effective_epsilon = e->epsilon;
  } else if (const auto* m = std::get_if<MRanking>(&estimator)) {
    const auto sel = select_m_rank(scores, center, m->m);
    out.eta_hat = eta_hat(model, batch_cal, sel.indices, kind);
    out.n_selected = sel.indices.size();
    out.effective_epsilon = sel.effective_epsilon;
  } else {
    throw InvalidArgument("the naive estimator has no selection window");
  }
  return out;
}

}  // namespace

GradEstimate estimate(const Model& model, std::span<const Example> batch_cal, double alpha,
                      ScoreKind kind, const EstimatorKind& estimator) {
  if (batch_cal.empty()) throw InvalidArgument("quantile gradient of an empty batch");
  if (std::holds_alternative<Naive>(estimator))
    return naive_quantile_grad(model, batch_cal, alpha, kind);
  const auto scores = true_label_scores(model, batch_cal, kind);
  const auto q = empirical_quantile(scores, alpha);
  return select_and_average(model, batch_cal, scores, q.tau, kind, estimator);
}

GradEstimate estimate_centered(const Model& model, std::span<const Example> batch_cal,
                               double center, ScoreKind kind, const EstimatorKind& estimator) {
  if (batch_cal.empty()) throw InvalidArgument("quantile gradient of an empty batch");
  const auto scores = true_label_scores(model, batch_cal, kind);
  return select_and_average(model, batch_cal, scores, center, kind, estimator);
}

}  // namespace crm
