// Command-line front end. Talks to the pipeline exclusively through the C API
// in sqlink.h so it doubles as a smoke test for the shared library surface.
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sqlink.h"

using ordered_json = nlohmann::ordered_json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string variant;
  std::string backend_kind;
  std::string fixture_path;
  std::string endpoint_url;
  std::string model_name;
  std::string templates_dir;
  long long limit = -1;
  int parallelism = -1;
  int seed = -1;
  bool json_output = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "Run configuration (JSON)")
      ->required();
  cmd->add_option("-o,--out", opts.out_dir, "Output directory (overrides config)");
  cmd->add_option("--variant", opts.variant,
                  "Pipeline variant, e.g. chunked+non_trusting");
  cmd->add_option("--backend", opts.backend_kind,
                  "Backend kind: http, fixture, oracle_links, replay_gold_sql");
  cmd->add_option("--fixture", opts.fixture_path, "Fixture JSONL for --backend fixture");
  cmd->add_option("--endpoint", opts.endpoint_url, "Endpoint URL for --backend http");
  cmd->add_option("--model", opts.model_name, "Model name sent to an http backend");
  cmd->add_option("--templates", opts.templates_dir, "Prompt template directory");
  cmd->add_option("--limit", opts.limit, "Only process the first N examples");
  cmd->add_option("--parallelism", opts.parallelism, "Worker threads for backend calls");
  cmd->add_option("--seed", opts.seed, "Seed for the SFT split shuffle");
  cmd->add_option("--set", opts.sets,
                  "Raw config override KEY=VALUE (VALUE parsed as JSON, else string)");
  cmd->add_flag("--json", opts.json_output, "Always print the JSON summary");
}

std::string build_overrides(const CommonOpts& opts) {
  ordered_json j = ordered_json::object();
  if (!opts.out_dir.empty()) j["out_dir"] = opts.out_dir;
  if (!opts.variant.empty()) j["variant"] = opts.variant;
  if (!opts.templates_dir.empty()) j["templates_dir"] = opts.templates_dir;
  if (opts.limit >= 0) j["limit"] = opts.limit;
  if (opts.parallelism >= 0) j["parallelism"] = opts.parallelism;
  if (opts.seed >= 0) j["seed"] = opts.seed;
  if (!opts.backend_kind.empty()) {
    ordered_json backend{{"kind", opts.backend_kind}};
    if (!opts.fixture_path.empty()) backend["fixture_path"] = opts.fixture_path;
    if (!opts.endpoint_url.empty()) backend["endpoint_url"] = opts.endpoint_url;
    if (!opts.model_name.empty()) backend["model_name"] = opts.model_name;
    j["backend"] = std::move(backend);
  } else if (!opts.fixture_path.empty() || !opts.endpoint_url.empty() ||
             !opts.model_name.empty()) {
    throw CLI::ValidationError("--fixture/--endpoint/--model require --backend");
  }
  for (const auto& kv : opts.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw CLI::ValidationError("--set expects KEY=VALUE, got '" + kv + "'");
    std::string key = kv.substr(0, eq);
    std::string value = kv.substr(eq + 1);
    ordered_json parsed = ordered_json::parse(value, nullptr, false);
    j[key] = parsed.is_discarded() ? ordered_json(value) : parsed;
  }
  return j.empty() ? std::string() : j.dump();
}

int report_failure(sqlink_ctx* ctx, int rc) {
  std::fprintf(stderr, "error: %s\n", sqlink_last_error(ctx));
  return rc;
}

// Eval and report summaries carry a pre-rendered table; print that unless the
// caller asked for JSON.
int print_summary(char* summary_json, bool json_output) {
  std::string text = summary_json ? summary_json : "";
  sqlink_string_free(summary_json);
  if (!json_output) {
    ordered_json j = ordered_json::parse(text, nullptr, false);
    if (!j.is_discarded() && j.contains("table") && j["table"].is_string()) {
      std::fputs(j["table"].get<std::string>().c_str(), stdout);
      return 0;
    }
  }
  std::fputs(text.c_str(), stdout);
  std::fputc('\n', stdout);
  return 0;
}

using ConfigCommand = int (*)(sqlink_ctx*, const char*, const char*, char**);

int run_config_command(sqlink_ctx* ctx, ConfigCommand fn, const CommonOpts& opts) {
  std::string overrides = build_overrides(opts);
  char* summary = nullptr;
  int rc = fn(ctx, opts.config_path.c_str(), overrides.empty() ? nullptr : overrides.c_str(),
              &summary);
  if (rc != SQLINK_OK) return report_failure(ctx, rc);
  return print_summary(summary, opts.json_output);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage schema linking and SQL generation over SQLite databases"};
  app.require_subcommand(1);
  app.set_version_flag("--version", sqlink_version());

  CommonOpts extract_opts, chunk_opts, run_opts, eval_opts, sft_opts;
  std::string predictions_path, sft_stage;
  std::string report_path, report_model = "model";
  bool report_json = false;

  add_common(app.add_subcommand("extract-links",
                                "Extract gold schema links from example SQL"),
             extract_opts);
  add_common(app.add_subcommand("chunk", "Render schema chunks under the token budget"),
             chunk_opts);
  add_common(app.add_subcommand("run", "Run the link and SQL stages against a backend"),
             run_opts);

  auto* eval_cmd =
      app.add_subcommand("eval", "Execute predictions against SQLite and score them");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("-p,--predictions", predictions_path,
                       "Predictions JSONL (default: <out_dir>/predictions.jsonl)");

  auto* sft_cmd =
      app.add_subcommand("export-sft", "Export fine-tuning prompt/completion pairs");
  add_common(sft_cmd, sft_opts);
  sft_cmd->add_option("--stage", sft_stage, "Which stage to export: link or sql")
      ->check(CLI::IsMember({"link", "sql"}));

  auto* report_cmd = app.add_subcommand("report", "Render a saved report.json as a table");
  report_cmd->add_option("-r,--report", report_path, "Path to report.json")->required();
  report_cmd->add_option("--model", report_model, "Label for the table's model column");
  report_cmd->add_flag("--json", report_json, "Print the JSON summary instead");

  CLI11_PARSE(app, argc, argv);

  sqlink_ctx* ctx = sqlink_ctx_new();
  if (!ctx) {
    std::fprintf(stderr, "error: out of memory\n");
    return SQLINK_ERR_INTERNAL;
  }

  int rc = 0;
  try {
    if (app.got_subcommand("extract-links")) {
      rc = run_config_command(ctx, &sqlink_cmd_extract_links, extract_opts);
    } else if (app.got_subcommand("chunk")) {
      rc = run_config_command(ctx, &sqlink_cmd_chunk, chunk_opts);
    } else if (app.got_subcommand("run")) {
      rc = run_config_command(ctx, &sqlink_cmd_run, run_opts);
    } else if (app.got_subcommand("eval")) {
      std::string overrides = build_overrides(eval_opts);
      char* summary = nullptr;
      rc = sqlink_cmd_eval(ctx, eval_opts.config_path.c_str(),
                           overrides.empty() ? nullptr : overrides.c_str(),
                           predictions_path.empty() ? nullptr : predictions_path.c_str(),
                           &summary);
      rc = rc != SQLINK_OK ? report_failure(ctx, rc)
                           : print_summary(summary, eval_opts.json_output);
    } else if (app.got_subcommand("export-sft")) {
      if (!sft_stage.empty()) sft_opts.sets.push_back("sft_stage=" + sft_stage);
      rc = run_config_command(ctx, &sqlink_cmd_export_sft, sft_opts);
    } else if (app.got_subcommand("report")) {
      char* summary = nullptr;
      rc = sqlink_cmd_report(ctx, report_path.c_str(), report_model.c_str(), &summary);
      rc = rc != SQLINK_OK ? report_failure(ctx, rc) : print_summary(summary, report_json);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    rc = SQLINK_ERR_CONFIG;
  }

  sqlink_ctx_free(ctx);
  return rc;
}
