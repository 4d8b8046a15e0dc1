#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "crm/data.hpp"
#include "crm/eval.hpp"
#include "crm/trainer.hpp"

namespace crm {

struct DataConfig {
  std::string source = "gmm";  // gmm | idx | cache
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::string cache;
  std::size_t train_size = 6000;
  std::size_t cal_size = 2000;
  std::size_t test_size = 2000;
};

/// Everything a CLI run reads from its config file.
///
/// The file is flat `key = value` text grouped in sections ([run], [data],
/// [gmm], [model], [train], [conformal], [eval], [study]). Unknown sections or
/// keys are errors. One top-level seed feeds every random consumer through
/// named sub-streams.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  DataConfig data;
  GmmSpec gmm = GmmSpec::default_spec(0);
  std::vector<std::size_t> hidden;  // empty: single dense layer
  TrainConfig train;
  std::size_t eval_trials = 10;
  StudyConfig study;
  /// Directory of the config file; relative data paths resolve against
  /// CRM_DATA_DIR when set, else against this directory.
  std::filesystem::path base_dir;

  /// Re-derives the seed-dependent fields after an override.
  void set_seed(std::uint64_t s);
};

/// Throws ConfigError on unknown keys, malformed values or failed validation.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Every accepted "section.key" name, in documentation order.
const std::vector<std::string>& known_config_keys();

}  // namespace crm
