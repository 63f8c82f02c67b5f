#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "sqlink/chunker.hpp"
#include "sqlink/infer.hpp"
#include "sqlink/prompts.hpp"
#include "sqlink/types.hpp"

namespace sqlink::config {

using ordered_json = nlohmann::ordered_json;

struct RunConfig {
  std::string questions_path;
  std::string databases_dir;
  bool with_descriptions = true;
  // Optional precomputed inputs; empty means compute on the fly.
  std::string gold_links_path;
  std::string predicted_links_path;

  prompts::PipelineVariant variant;
  chunker::TokenBudget link_budget;  // defaulted from link_mode when absent
  chunker::TokenBudget sql_budget = chunker::budget_of(chunker::kDefaultNdBudgetTokens);

  infer::BackendConfig backend;
  std::optional<infer::BackendConfig> link_backend;
  std::optional<infer::BackendConfig> sql_backend;

  std::string templates_dir;  // empty = embedded defaults
  std::map<std::string, std::string> instructions;

  int parallelism = 4;
  int timeout_ms = 30000;
  std::string out_dir = "out";
  std::uint64_t seed = 13;
  std::string model_label = "model";
  int limit = 0;  // 0 = whole corpus
  double train_fraction = 0.85;
  Stage sft_stage = Stage::link;

  const infer::BackendConfig& backend_for(Stage stage) const;
  prompts::TemplateSet templates() const;
};

// Replaces ${NAME} in every string value with the environment variable;
// unset variables are config errors naming the path to the value.
void interpolate_env(ordered_json& j);

RunConfig config_from_json(const ordered_json& j);

// Parses the file, interpolates ${ENV}, applies overrides (an object whose
// keys replace top-level config keys; an overriding "backend" also clears
// link_backend/sql_backend), validates.
RunConfig load_config(const std::string& path, const ordered_json& overrides = {});

// Fully materialized copy, written into each run directory.
ordered_json config_to_json(const RunConfig& config);

// Input paths must exist; perfect link mode forbids a configured link
// backend and the direct sql mode; numeric ranges checked.
void validate_config(const RunConfig& config);

}  // namespace sqlink::config
