#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace spikevol::cli {

/// Applies `key.sub=value` overrides; values are parsed as JSON when
/// possible and kept as strings otherwise.
void apply_overrides(nlohmann::json& config, const std::vector<std::string>& assignments);

nlohmann::json load_config(const std::filesystem::path& path);

/// Hash of the run configuration without its "paths" block; input files it
/// names (evaluation.method, finetune.checkpoint, report.inputs) count by
/// content, so runs that differ only in where files live share one hash.
std::string run_hash(const nlohmann::json& config);

// Each command reads its block of the run config. Outputs go to
// paths.output; datasets live in paths.dataset.
void cmd_gen(const nlohmann::json& config);
void cmd_baseline(const nlohmann::json& config, const std::string& method);
void cmd_train(const nlohmann::json& config);
void cmd_finetune(const nlohmann::json& config);
void cmd_eval(const nlohmann::json& config);
void cmd_report(const nlohmann::json& config);

/// Maps the error hierarchy onto exit codes (0 ok, 2 config, 3 data, 4 numeric).
int exit_code_for(const std::exception& e);

}  // namespace spikevol::cli
