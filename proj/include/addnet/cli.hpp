#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "addnet/data.hpp"
#include "addnet/model_spec.hpp"
#include "addnet/trainer.hpp"

namespace addnet::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kDiverged = 2, kDataError = 3 };

/// Environment variable naming the default output root; "runs" when unset.
inline constexpr const char* kOutRootVariable = "ADDNET_OUT_ROOT";

/// Everything a training run needs, after file values and overrides merge.
struct RunConfig {
  model::ModelSpec model;
  trainer::TrainConfig train;
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> mask_cache;
  std::optional<double> sigma;

  nlohmann::json to_json() const;
};

/// Sets a dotted key (e.g. "train.total_steps") from "key=value". The value is
/// read as JSON when it parses and as a plain string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Relative paths resolve against `base_dir`. Throws ConfigError.
RunConfig resolve_run_config(const nlohmann::json& raw, const std::filesystem::path& base_dir);

/// Entry point; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace addnet::cli
