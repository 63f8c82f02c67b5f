#pragma once

#include <string>

#include <json.hpp>

#include "sqlink/config.hpp"

namespace sqlink::commands {

using ordered_json = nlohmann::ordered_json;

// Each command materializes its artifacts under config.out_dir next to a
// frozen config.resolved.json copy, and returns a machine-readable summary.

// gold_links.jsonl + failures.jsonl from the corpus gold SQL.
ordered_json cmd_extract_links(const config::RunConfig& config);

// chunks.jsonl debug dump of the chunked link prompts.
ordered_json cmd_chunk(const config::RunConfig& config);

// Full pipeline: link prompts/completions/merged links (unless the variant
// skips stage 1), sql prompts/completions, predictions.jsonl.
ordered_json cmd_run(const config::RunConfig& config);

// report.json + report.txt from a predictions file (default:
// out_dir/predictions.jsonl).
ordered_json cmd_eval(const config::RunConfig& config,
                      const std::string& predictions_path = "");

// sft_<stage>_<variant>_{train,val}.jsonl supervised exports.
ordered_json cmd_export_sft(const config::RunConfig& config);

// Re-renders the accuracy table from a persisted report.json.
ordered_json cmd_report(const std::string& report_json_path, const std::string& model_label);

}  // namespace sqlink::commands
