#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "crm/config.hpp"
#include "crm/data.hpp"
#include "crm/nn.hpp"

namespace crm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::ostream* log = &std::cout;
  std::ostream* err = &std::cerr;
};

/// Writes model.ckpt and history.csv.
int cmd_train(const CommandOptions& opts);
/// Writes eval_trials.csv and eval_per_class.csv.
int cmd_eval(const CommandOptions& opts);
/// Writes study.csv and study_checks.csv; exit 1 when a gating check fails.
int cmd_study(const CommandOptions& opts);
/// Writes gmm_dataset.bin.
int cmd_gen_gmm(const CommandOptions& opts);

// Shared plumbing, exposed for tests.
RunConfig resolve_config(const CommandOptions& opts);
std::filesystem::path resolve_data_path(const RunConfig& cfg, const std::string& path);
std::array<Dataset, 3> load_splits(const RunConfig& cfg);
Model initial_model(const RunConfig& cfg, std::size_t in_dim, std::size_t num_classes);

}  // namespace crm::cli
