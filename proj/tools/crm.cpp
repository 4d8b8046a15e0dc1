#include <CLI11.hpp>

#include "crm/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Conformal risk minimization: training, evaluation and estimator studies"};
  app.require_subcommand(1);

  crm::cli::CommandOptions opts;
  std::string config, checkpoint, out;
  std::uint64_t seed = 0;
  std::size_t trials = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "run configuration file")->required();
    sub->add_option("--out", out, "output directory (overrides run.out)");
    sub->add_option("--seed", seed, "top-level seed (overrides run.seed)");
  };
  auto* train = app.add_subcommand("train", "train a model and write model.ckpt + history.csv");
  add_common(train);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over random calibration/test splits");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--trials", trials, "number of random splits (default 10)");
  auto* study = app.add_subcommand("study", "bias/variance study of the quantile-gradient estimators");
  add_common(study);
  study->add_option("--checkpoint", checkpoint, "model to study (default: seeded initial model)");
  study->add_option("--trials", trials, "Monte-Carlo trials per grid cell");
  auto* gen = app.add_subcommand("gen-gmm", "sample the Gaussian-mixture dataset into a cache file");
  add_common(gen);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : crm::cli::kExitUsage;
  }

  opts.config = config;
  if (!checkpoint.empty()) opts.checkpoint = checkpoint;
  if (!out.empty()) opts.out = out;
  for (auto* sub : {train, eval, study, gen})
    if (sub->parsed() && sub->count("--seed")) opts.seed = seed;
  for (auto* sub : {eval, study})
    if (sub->parsed() && sub->count("--trials")) opts.trials = trials;

  if (train->parsed()) return crm::cli::cmd_train(opts);
  if (eval->parsed()) return crm::cli::cmd_eval(opts);
  if (study->parsed()) return crm::cli::cmd_study(opts);
  return crm::cli::cmd_gen_gmm(opts);
}
