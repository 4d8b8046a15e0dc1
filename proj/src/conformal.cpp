#include "crm/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "crm/error.hpp"

namespace crm {

std::string to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::Probability: return "probability";
    case ScoreKind::Logit: return "logit";
    case ScoreKind::LogProbability: return "log_probability";
  }
  return "unknown";
}

ScoreKind parse_score_kind(std::string_view name) {
  if (name == "probability") return ScoreKind::Probability;
  if (name == "logit") return ScoreKind::Logit;
  if (name == "log_probability") return ScoreKind::LogProbability;
  throw InvalidArgument("unknown score kind '" + std::string(name) +
                        "' (expected probability, logit or log_probability)");
}

void ConformalConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (!(target_size >= 0.0) || std::floor(target_size) != target_size)
    throw InvalidArgument("target size must be a nonnegative integer");
  if (!(size_weight >= 0.0)) throw InvalidArgument("size weight must be nonnegative");
  if (!(reg_weight >= 0.0)) throw InvalidArgument("regularizer weight must be nonnegative");
  if (!(base_loss_weight >= 0.0)) throw InvalidArgument("base loss weight must be nonnegative");
}

PredictionSet::PredictionSet(std::initializer_list<std::size_t> labels, std::size_t num_classes)
    : members_(num_classes, 0) {
  for (const auto label : labels) insert(label);
}

void PredictionSet::insert(std::size_t label) {
  if (label >= members_.size()) throw DimensionError("label outside prediction set", members_.size(), label);
  members_[label] = 1;
}

std::size_t PredictionSet::size() const noexcept {
  return static_cast<std::size_t>(std::count(members_.begin(), members_.end(), std::uint8_t{1}));
}

double SmoothSet::size() const noexcept {
  return std::accumulate(memberships.begin(), memberships.end(), 0.0);
}

double sigmoid(double u) noexcept {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (const double z : logits) sum += std::exp(z - top);
  const double log_norm = top + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - log_norm;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (auto& v : out) v = std::exp(v);
  return out;
}

namespace {

void check_label(std::span<const double> logits, std::size_t label) {
  if (logits.empty()) throw DimensionError("empty logit vector", 1, 0);
  if (label >= logits.size())
    throw InvalidArgument("label " + std::to_string(label) + " out of range for " +
                          std::to_string(logits.size()) + " classes");
}

}  // namespace

double score(std::span<const double> logits, std::size_t label, ScoreKind kind) {
  check_label(logits, label);
  switch (kind) {
    case ScoreKind::Logit: return logits[label];
    case ScoreKind::LogProbability: return log_softmax(logits)[label];
    case ScoreKind::Probability: return softmax(logits)[label];
  }
  return 0.0;
}

std::vector<double> all_scores(std::span<const double> logits, ScoreKind kind) {
  if (logits.empty()) throw DimensionError("empty logit vector", 1, 0);
  switch (kind) {
    case ScoreKind::Logit: return {logits.begin(), logits.end()};
    case ScoreKind::LogProbability: return log_softmax(logits);
    case ScoreKind::Probability: return softmax(logits);
  }
  return {};
}

std::vector<double> score_logit_grad(std::span<const double> logits, std::size_t label,
                                     ScoreKind kind) {
  check_label(logits, label);
  std::vector<double> grad(logits.size(), 0.0);
  switch (kind) {
    case ScoreKind::Logit:
      grad[label] = 1.0;
      break;
    case ScoreKind::LogProbability: {
      // d log p_y / dz_k = [k == y] - p_k
      const auto p = softmax(logits);
      for (std::size_t k = 0; k < p.size(); ++k) grad[k] = -p[k];
      grad[label] += 1.0;
      break;
    }
    case ScoreKind::Probability: {
      // d p_y / dz_k = p_y ([k == y] - p_k)
      const auto p = softmax(logits);
      for (std::size_t k = 0; k < p.size(); ++k) grad[k] = -p[label] * p[k];
      grad[label] += p[label];
      break;
    }
  }
  return grad;
}

std::size_t quantile_rank(std::size_t n, double alpha) {
  if (n == 0) throw InvalidArgument("quantile of an empty sample");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  // The relative slack keeps products such as 0.7 * 10 = 7.000000000000001
  // from being rounded up to the next rank.
  const double product = alpha * static_cast<double>(n);
  const auto rank = static_cast<std::size_t>(std::ceil(product - 1e-9 * std::max(1.0, product)));
  return std::clamp<std::size_t>(rank, 1, n);
}

Quantile empirical_quantile(std::span<const double> scores, double alpha) {
  if (scores.empty()) throw InvalidArgument("empirical quantile of an empty sample");
  for (const double s : scores)
    if (!std::isfinite(s)) throw InvalidArgument("non-finite conformity score");
  const std::size_t rank = quantile_rank(scores.size(), alpha);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto before = [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   order.end(), before);
  const std::size_t index = order[rank - 1];
  return {scores[index], index};
}

PredictionSet thr_set(std::span<const double> logits, double tau, ScoreKind kind) {
  const auto scores = all_scores(logits, kind);
  PredictionSet set(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k)
    if (scores[k] >= tau) set.insert(k);
  return set;
}

SmoothSet smooth_set(std::span<const double> logits, double tau, const ConformalConfig& config) {
  if (!(config.temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  auto scores = all_scores(logits, config.score_kind);
  for (auto& s : scores) s = sigmoid((s - tau) / config.temperature);
  return {std::move(scores)};
}

SetMetrics set_metrics(std::span<const PredictionSet> sets, std::span<const std::size_t> labels) {
  if (sets.empty()) throw InvalidArgument("set metrics of an empty collection");
  if (sets.size() != labels.size())
    throw DimensionError("labels per prediction set", sets.size(), labels.size());
  const std::size_t num_classes = sets.front().num_classes();

  SetMetrics m;
  m.class_coverage.assign(num_classes, 0.0);
  m.class_size.assign(num_classes, 0.0);
  m.class_count.assign(num_classes, 0);
  std::size_t covered = 0;
  std::size_t total_size = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const std::size_t y = labels[i];
    if (y >= num_classes) throw InvalidArgument("label out of range in set metrics");
    const bool hit = sets[i].contains(y);
    const std::size_t size = sets[i].size();
    covered += hit;
    total_size += size;
    m.class_coverage[y] += hit;
    m.class_size[y] += static_cast<double>(size);
    ++m.class_count[y];
  }
  const auto n = static_cast<double>(sets.size());
  m.coverage = static_cast<double>(covered) / n;
  m.avg_size = static_cast<double>(total_size) / n;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (m.class_count[k] == 0) {
      m.class_coverage[k] = std::numeric_limits<double>::quiet_NaN();
      m.class_size[k] = std::numeric_limits<double>::quiet_NaN();
    } else {
      m.class_coverage[k] /= static_cast<double>(m.class_count[k]);
      m.class_size[k] /= static_cast<double>(m.class_count[k]);
    }
  }
  return m;
}

}  // namespace crm
