#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "qean/error.hpp"
#include "qean/model.hpp"
#include "qean/training.hpp"

namespace qean {

/// Process exit codes.
enum class Exit : int {
  Ok = 0,
  VerifyFailed = 1,
  Usage = 2,
  Runtime = 3,
  Metric = 4,
};

Exit exit_code_for(Errc code) noexcept;

/// Model and training settings of one run.
///
/// Config files are flat `key = value` lines; `#` starts a comment. Keys are
/// the ModelConfig and TrainConfig field names, plus
///   preset       desk | paper, applied before any other key regardless of order
///   decay_steps  comma-separated step:lr pairs, e.g. 2000:1e-5,4000:1e-6
struct RunConfig {
  ModelConfig model = ModelConfig::desk();
  TrainConfig train = TrainConfig::desk();

  /// ConfigError on unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  /// Every key with its effective value; parses back to the same config.
  std::string to_string() const;
};

RunConfig parse_run_config(std::string_view text);
/// Every key accepted by RunConfig::set.
std::vector<std::string> run_config_keys();

}  // namespace qean
