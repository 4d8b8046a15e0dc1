#include "crm/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "crm/error.hpp"
#include "crm/eval.hpp"
#include "crm/rng.hpp"
#include "crm/trainer.hpp"

namespace crm::cli {
namespace {

namespace fs = std::filesystem;

fs::path output_dir(const RunConfig& cfg, const CommandOptions& opts) {
  fs::path dir = opts.out ? *opts.out : fs::path(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  fn(out);
  if (!out) throw IoError("write failed: " + path.string());
}

template <typename Fn>
int guarded(const CommandOptions& opts, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    *opts.err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    *opts.err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

RunConfig resolve_config(const CommandOptions& opts) {
  if (opts.config.empty()) throw ConfigError("config not found: no --config given");
  if (!fs::exists(opts.config)) throw ConfigError("config not found: " + opts.config.string());
  RunConfig cfg = load_run_config(opts.config);
  if (opts.seed) cfg.set_seed(*opts.seed);
  if (opts.trials) {
    if (*opts.trials == 0) throw ConfigError("--trials must be at least 1");
    cfg.eval_trials = *opts.trials;
  }
  return cfg;
}

fs::path resolve_data_path(const RunConfig& cfg, const std::string& path) {
  if (path.empty()) throw ConfigError("missing data path in config");
  fs::path p(path);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("CRM_DATA_DIR"); root && *root) return fs::path(root) / p;
  return cfg.base_dir / p;
}

std::array<Dataset, 3> load_splits(const RunConfig& cfg) {
  const auto& d = cfg.data;
  const std::array<std::size_t, 3> sizes = {d.train_size, d.cal_size, d.test_size};
  if (d.source == "gmm") return split_dataset(gen_gmm(cfg.gmm), sizes, cfg.seed);
  if (d.source == "cache") return split_dataset(load_dataset(resolve_data_path(cfg, d.cache)), sizes, cfg.seed);

  const Dataset pool = load_idx(resolve_data_path(cfg, d.train_images), resolve_data_path(cfg, d.train_labels), "idx");
  if (d.test_images.empty()) return split_dataset(pool, sizes, cfg.seed);
  auto parts = split_dataset(pool, {d.train_size, d.cal_size, 0}, cfg.seed);
  Dataset test = load_idx(resolve_data_path(cfg, d.test_images), resolve_data_path(cfg, d.test_labels), "idx-test");
  if (d.test_size < test.size()) {
    std::vector<std::size_t> first(d.test_size);
    for (std::size_t i = 0; i < first.size(); ++i) first[i] = i;
    test = test.subset(first, "idx-test");
  }
  parts[2] = std::move(test);
  return parts;
}

Model initial_model(const RunConfig& cfg, std::size_t in_dim, std::size_t num_classes) {
  Model model = cfg.hidden.empty() ? Model::linear(in_dim, num_classes) : Model::mlp(in_dim, cfg.hidden, num_classes);
  Rng rng = Rng(cfg.seed).derive("init");
  model.init_uniform(rng);
  return model;
}

int cmd_train(const CommandOptions& opts) {
  return guarded(opts, [&] {
    const RunConfig cfg = resolve_config(opts);
    const auto [train_set, cal_set, test_set] = load_splits(cfg);
    if (cal_set.empty() || test_set.empty()) throw ConfigError("calibration and test splits must be non-empty");
    Model model = initial_model(cfg, train_set.feature_dim(), train_set.num_classes());
    auto [trained, history] = train(std::move(model), train_set, cal_set, test_set, cfg.train);

    const fs::path dir = output_dir(cfg, opts);
    save_model(trained, dir / "model.ckpt");
    write_file(dir / "history.csv", [&](std::ostream& out) { history.write_csv(out); });
    if (!history.epochs.empty()) {
      const auto& last = history.epochs.back();
      *opts.log << "epoch " << last.epoch << " train_loss " << fixed(last.train_loss) << " test_loss "
                << fixed(last.test_loss) << " test_acc " << fixed(last.test_acc) << " avg_set_size "
                << fixed(last.avg_set_size) << " coverage " << fixed(last.coverage) << '\n';
    }
    return kExitOk;
  });
}

int cmd_eval(const CommandOptions& opts) {
  return guarded(opts, [&] {
    const RunConfig cfg = resolve_config(opts);
    if (!opts.checkpoint) throw ConfigError("eval requires --checkpoint");
    if (!fs::exists(*opts.checkpoint)) throw IoError("checkpoint not found: " + opts.checkpoint->string());
    const Model model = load_model(*opts.checkpoint);
    const auto [train_set, cal_set, test_set] = load_splits(cfg);
    if (model.input_dim() != test_set.feature_dim() || model.output_dim() != test_set.num_classes())
      throw DimensionError("checkpoint does not match dataset (input dim)", test_set.feature_dim(), model.input_dim());
    const auto& c = cfg.train.conformal;
    const EvalReport report = evaluate(model, cal_set, test_set, c.alpha, cfg.eval_trials, cfg.seed, c.score_kind);

    const fs::path dir = output_dir(cfg, opts);
    write_file(dir / "eval_trials.csv", [&](std::ostream& out) { report.write_trials_csv(out); });
    write_file(dir / "eval_per_class.csv", [&](std::ostream& out) { report.write_per_class_csv(out); });
    *opts.log << "trials " << report.trials.size() << " accuracy " << fixed(report.accuracy) << " coverage "
              << fixed(report.coverage) << " +- " << fixed(report.coverage_std) << " avg_size "
              << fixed(report.avg_size) << " +- " << fixed(report.avg_size_std) << '\n';
    return kExitOk;
  });
}

int cmd_study(const CommandOptions& opts) {
  return guarded(opts, [&] {
    RunConfig cfg = resolve_config(opts);
    if (opts.trials) cfg.study.trials = *opts.trials;
    cfg.study.validate();
    const Model model = opts.checkpoint ? load_model(*opts.checkpoint)
                                        : initial_model(cfg, cfg.gmm.feature_dim(), cfg.gmm.num_classes());
    const StudyReport report = estimator_study(model, cfg.gmm, cfg.study);

    const fs::path dir = output_dir(cfg, opts);
    write_file(dir / "study.csv", [&](std::ostream& out) { report.write_csv(out); });
    write_file(dir / "study_checks.csv", [&](std::ostream& out) { report.write_checks_csv(out); });
    for (const auto& check : report.checks) {
      const char* tag = check.passed ? "[PASS]" : (check.gating ? "[FAIL]" : "[INFO]");
      *opts.log << tag << ' ' << check.name << " value " << check.value << " bound " << check.bound;
      if (!check.detail.empty()) *opts.log << " (" << check.detail << ')';
      *opts.log << '\n';
    }
    return report.all_passed() ? kExitOk : kExitCheckFailed;
  });
}

int cmd_gen_gmm(const CommandOptions& opts) {
  return guarded(opts, [&] {
    const RunConfig cfg = resolve_config(opts);
    const Dataset ds = gen_gmm(cfg.gmm);
    const fs::path dir = output_dir(cfg, opts);
    save_dataset(ds, dir / "gmm_dataset.bin");
    *opts.log << "wrote " << ds.size() << " samples (" << ds.num_classes() << " classes, dim "
              << ds.feature_dim() << ") to " << (dir / "gmm_dataset.bin").string() << '\n';
    return kExitOk;
  });
}

}  // namespace crm::cli
