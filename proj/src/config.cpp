#include "crm/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <sstream>

#include "crm/error.hpp"

namespace crm {
namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc{} || res.ptr != end || text.empty())
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
  return value;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& p : split(text, ',')) out.push_back(parse_number<double>(key, p));
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  if (trim(text).empty()) return out;
  for (const auto& p : split(text, ',')) out.push_back(parse_number<std::size_t>(key, p));
  return out;
}

// "a,b;c,d" -> {{a,b},{c,d}}
std::vector<std::vector<double>> parse_rows(const std::string& key, const std::string& text) {
  std::vector<std::vector<double>> rows;
  for (const auto& r : split(text, ';')) rows.push_back(parse_doubles(key, r));
  return rows;
}

}  // namespace

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "run.seed", "run.out",
      "data.source", "data.train_images", "data.train_labels", "data.test_images",
      "data.test_labels", "data.cache", "data.train_size", "data.cal_size", "data.test_size",
      "gmm.means", "gmm.variances", "gmm.weights",
      "model.hidden",
      "train.batch_size", "train.epochs", "train.learning_rate", "train.momentum",
      "train.estimator", "train.m_rank", "train.epsilon",
      "conformal.alpha", "conformal.temperature", "conformal.target_size", "conformal.size_weight",
      "conformal.regularizer_weight", "conformal.score", "conformal.base_loss_weight",
      "eval.trials",
      "study.estimators", "study.batch_sizes", "study.trials", "study.oracle_draws",
      "study.window_mass", "study.epsilon", "study.bias_check_sizes", "study.bias_check_trials",
      "study.cov_check_sizes",
  };
  return keys;
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  gmm.seed = s;
  train.seed = s;
  study.seed = s;
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }

  // Flatten and reject anything not documented.
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [section, body] : tree) {
    if (body.empty())
      throw ConfigError("config key '" + section + "' must live inside a [section]");
    for (const auto& [key, value] : body) entries.emplace_back(section + "." + key, trim(value.data()));
  }
  const auto& known = known_config_keys();
  for (const auto& [key, value] : entries)
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key '" + key + "'");

  RunConfig cfg;
  cfg.base_dir = base_dir;
  std::string estimator = "mrank";
  std::size_t m_rank = 6;
  double epsilon = 0.0;
  std::vector<std::vector<double>> means, variances;
  std::vector<double> weights;

  for (const auto& [key, v] : entries) {
    if (key == "run.seed") cfg.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "run.out") cfg.out = v;
    else if (key == "data.source") cfg.data.source = v;
    else if (key == "data.train_images") cfg.data.train_images = v;
    else if (key == "data.train_labels") cfg.data.train_labels = v;
    else if (key == "data.test_images") cfg.data.test_images = v;
    else if (key == "data.test_labels") cfg.data.test_labels = v;
    else if (key == "data.cache") cfg.data.cache = v;
    else if (key == "data.train_size") cfg.data.train_size = parse_number<std::size_t>(key, v);
    else if (key == "data.cal_size") cfg.data.cal_size = parse_number<std::size_t>(key, v);
    else if (key == "data.test_size") cfg.data.test_size = parse_number<std::size_t>(key, v);
    else if (key == "gmm.means") means = parse_rows(key, v);
    else if (key == "gmm.variances") variances = parse_rows(key, v);
    else if (key == "gmm.weights") weights = parse_doubles(key, v);
    else if (key == "model.hidden") cfg.hidden = parse_sizes(key, v);
    else if (key == "train.batch_size") cfg.train.batch_size = parse_number<std::size_t>(key, v);
    else if (key == "train.epochs") cfg.train.epochs = parse_number<std::size_t>(key, v);
    else if (key == "train.learning_rate") cfg.train.base_lr = parse_number<double>(key, v);
    else if (key == "train.momentum") cfg.train.momentum = parse_number<double>(key, v);
    else if (key == "train.estimator") estimator = v;
    else if (key == "train.m_rank") m_rank = parse_number<std::size_t>(key, v);
    else if (key == "train.epsilon") epsilon = parse_number<double>(key, v);
    else if (key == "conformal.alpha") cfg.train.conformal.alpha = parse_number<double>(key, v);
    else if (key == "conformal.temperature") cfg.train.conformal.temperature = parse_number<double>(key, v);
    else if (key == "conformal.target_size") cfg.train.conformal.target_size = parse_number<double>(key, v);
    else if (key == "conformal.size_weight") cfg.train.conformal.size_weight = parse_number<double>(key, v);
    else if (key == "conformal.regularizer_weight") cfg.train.conformal.reg_weight = parse_number<double>(key, v);
    else if (key == "conformal.base_loss_weight") cfg.train.conformal.base_loss_weight = parse_number<double>(key, v);
    else if (key == "conformal.score") {
      try {
        cfg.train.conformal.score_kind = parse_score_kind(v);
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("config key 'conformal.score': ") + e.what());
      }
    }
    else if (key == "eval.trials") cfg.eval_trials = parse_number<std::size_t>(key, v);
    else if (key == "study.estimators") {
      cfg.study.estimators.clear();
      for (const auto& name : split(v, ',')) {
        if (name == "eps") {
          cfg.study.estimators.push_back(EpsThreshold{0.0});
          continue;
        }
        try {
          cfg.study.estimators.push_back(parse_estimator(name));
        } catch (const InvalidArgument& e) {
          throw ConfigError(std::string("config key 'study.estimators': ") + e.what());
        }
      }
    }
    else if (key == "study.batch_sizes") cfg.study.batch_sizes = parse_sizes(key, v);
    else if (key == "study.trials") cfg.study.trials = parse_number<std::size_t>(key, v);
    else if (key == "study.oracle_draws") cfg.study.oracle_draws = parse_number<std::size_t>(key, v);
    else if (key == "study.window_mass") cfg.study.window_mass = parse_number<double>(key, v);
    else if (key == "study.epsilon") cfg.study.epsilon = parse_number<double>(key, v);
    else if (key == "study.bias_check_sizes") cfg.study.bias_check_sizes = parse_sizes(key, v);
    else if (key == "study.bias_check_trials") cfg.study.bias_check_trials = parse_number<std::size_t>(key, v);
    else if (key == "study.cov_check_sizes") cfg.study.cov_check_sizes = parse_sizes(key, v);
  }

  if (estimator == "naive") cfg.train.estimator = Naive{};
  else if (estimator == "mrank") cfg.train.estimator = MRanking{m_rank};
  else if (estimator == "eps") cfg.train.estimator = EpsThreshold{epsilon};
  else throw ConfigError("config key 'train.estimator': expected naive, eps or mrank, got '" + estimator + "'");
  if (estimator == "eps" && !(epsilon > 0.0))
    throw ConfigError("config key 'train.epsilon' must be positive for the eps estimator");

  if (!means.empty() || !variances.empty() || !weights.empty()) {
    if (means.empty()) throw ConfigError("gmm.means is required when overriding the GMM");
    const std::size_t k = means.size();
    if (variances.empty()) variances.assign(k, std::vector<double>(means.front().size(), 1.0));
    if (weights.empty()) weights.assign(k, 1.0 / static_cast<double>(k));
    if (variances.size() != k || weights.size() != k)
      throw ConfigError("gmm.means, gmm.variances and gmm.weights must list the same number of classes");
    cfg.gmm.components.clear();
    for (std::size_t c = 0; c < k; ++c) cfg.gmm.components.push_back({means[c], variances[c], weights[c]});
  }
  if (cfg.data.source != "gmm" && cfg.data.source != "idx" && cfg.data.source != "cache")
    throw ConfigError("config key 'data.source': expected gmm, idx or cache, got '" + cfg.data.source + "'");

  cfg.set_seed(cfg.seed);
  cfg.gmm.num_samples = cfg.data.train_size + cfg.data.cal_size + cfg.data.test_size;
  cfg.study.alpha = cfg.train.conformal.alpha;
  cfg.study.kind = cfg.train.conformal.score_kind;
  try {
    cfg.gmm.validate();
    cfg.train.validate();
    if (cfg.eval_trials == 0) throw InvalidArgument("eval.trials must be at least 1");
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

}  // namespace crm
