#include "sqlink/commands.hpp"

#include <filesystem>
#include <vector>

#include <fmt/format.h>

#include "sqlink/artifacts.hpp"
#include "sqlink/chunker.hpp"
#include "sqlink/corpus.hpp"
#include "sqlink/error.hpp"
#include "sqlink/evalx.hpp"
#include "sqlink/infer.hpp"
#include "sqlink/linkex.hpp"
#include "sqlink/postproc.hpp"
#include "sqlink/prompts.hpp"

namespace fs = std::filesystem;

namespace sqlink::commands {

namespace {

struct LoadedCorpus {
  std::vector<Example> examples;
  corpus::SchemaStore store;
  corpus::LoadReport report;
};

LoadedCorpus load_corpus(const config::RunConfig& config) {
  LoadedCorpus out;
  auto loaded = corpus::load_examples(config.questions_path);
  out.examples = std::move(loaded.examples);
  out.report = std::move(loaded.report);
  if (config.limit > 0 && static_cast<std::size_t>(config.limit) < out.examples.size())
    out.examples.resize(static_cast<std::size_t>(config.limit));
  out.store = corpus::SchemaStore::load_dir(config.databases_dir, config.with_descriptions);
  return out;
}

std::string out_path(const config::RunConfig& config, const std::string& name) {
  return (fs::path(config.out_dir) / name).string();
}

void freeze_config(const config::RunConfig& config) {
  fs::create_directories(config.out_dir);
  artifacts::write_text_file(out_path(config, "config.resolved.json"),
                             config::config_to_json(config).dump(2) + "\n");
}

// Gold links from the configured file, or extracted here. When computed,
// gold_links.jsonl and any extraction failures land in the run directory.
std::map<long long, SchemaLink> gold_links_for(const config::RunConfig& config,
                                               const LoadedCorpus& corpus,
                                               artifacts::JsonlWriter* failures) {
  if (!config.gold_links_path.empty())
    return artifacts::load_links_jsonl(config.gold_links_path);

  auto batch = linkex::build_gold_links(corpus.examples, corpus.store);
  artifacts::JsonlWriter writer(out_path(config, "gold_links.jsonl"));
  for (const auto& example : corpus.examples) {
    auto it = batch.links.find(example.question_id);
    if (it == batch.links.end()) continue;
    ordered_json rec;
    rec["question_id"] = example.question_id;
    rec["db_id"] = example.db_id;
    rec["link"] = linkex::serialize_link(it->second);
    auto payload = artifacts::link_to_json(it->second);
    rec["columns"] = payload["columns"];
    rec["foreign_keys"] = payload["foreign_keys"];
    writer.write(rec);
  }
  if (failures) {
    for (const auto& failure : batch.failures) {
      failures->write(ordered_json{{"question_id", failure.question_id},
                                   {"stage", "gold"},
                                   {"error", failure.reason}});
    }
  }
  return std::move(batch.links);
}

ordered_json prompt_record(const prompts::RenderedPrompt& p) {
  ordered_json rec;
  rec["question_id"] = p.question_id;
  if (p.chunk_index) rec["chunk_index"] = *p.chunk_index;
  rec["chunk_total"] = p.chunk_total;
  rec["tables"] = p.chunk_tables;
  rec["token_count"] = p.token_count;
  rec["template_hash"] = p.template_hash;
  if (!p.shed.empty()) rec["shed"] = p.shed;
  rec["text"] = p.text;
  return rec;
}

ordered_json completion_record(const infer::Completion& c) {
  ordered_json rec;
  rec["question_id"] = c.question_id;
  if (c.chunk_index) rec["chunk_index"] = *c.chunk_index;
  rec["ok"] = c.ok;
  rec["raw_text"] = c.raw_text;
  if (!c.ok) rec["error"] = c.error;
  rec["backend"] = infer::backend_kind_name(c.backend_kind);
  rec["latency_ms"] = c.latency_ms;
  rec["prompt_hash"] = c.prompt_hash;
  return rec;
}

}  // namespace

ordered_json cmd_extract_links(const config::RunConfig& config) {
  LoadedCorpus corpus = load_corpus(config);
  freeze_config(config);

  auto batch = linkex::build_gold_links(corpus.examples, corpus.store);

  artifacts::JsonlWriter links(out_path(config, "gold_links.jsonl"));
  for (const auto& example : corpus.examples) {
    auto it = batch.links.find(example.question_id);
    if (it == batch.links.end()) continue;
    ordered_json rec;
    rec["question_id"] = example.question_id;
    rec["db_id"] = example.db_id;
    rec["link"] = linkex::serialize_link(it->second);
    auto payload = artifacts::link_to_json(it->second);
    rec["columns"] = payload["columns"];
    rec["foreign_keys"] = payload["foreign_keys"];
    links.write(rec);
  }

  artifacts::JsonlWriter failures(out_path(config, "failures.jsonl"));
  for (const auto& failure : batch.failures) {
    failures.write(ordered_json{{"question_id", failure.question_id},
                                {"db_id", failure.db_id},
                                {"error", failure.reason}});
  }

  return ordered_json{{"command", "extract-links"},
                      {"examples", corpus.examples.size()},
                      {"extracted", links.count()},
                      {"failed", failures.count()},
                      {"rejected_inputs", corpus.report.rejected.size()},
                      {"out_dir", config.out_dir}};
}

ordered_json cmd_chunk(const config::RunConfig& config) {
  LoadedCorpus corpus = load_corpus(config);
  freeze_config(config);
  prompts::TemplateSet templates = config.templates();

  artifacts::JsonlWriter chunks(out_path(config, "chunks.jsonl"));
  artifacts::JsonlWriter failures(out_path(config, "failures.jsonl"));
  for (const auto& example : corpus.examples) {
    const DatabaseSchema* schema = corpus.store.find(example.db_id);
    if (!schema) {
      failures.write(ordered_json{{"question_id", example.question_id},
                                  {"stage", "link"},
                                  {"error", fmt::format("no schema for db '{}'",
                                                        example.db_id)}});
      continue;
    }
    try {
      auto rendered = prompts::build_link_prompts_chunked(*schema, example,
                                                          config.link_budget, templates);
      for (const auto& p : rendered) {
        ordered_json rec;
        rec["question_id"] = p.question_id;
        rec["index"] = p.chunk_index ? *p.chunk_index : 0;
        rec["total"] = p.chunk_total;
        rec["included_tables"] = p.chunk_tables;
        rec["token_count"] = p.token_count;
        rec["text"] = p.text;
        chunks.write(rec);
      }
    } catch (const Error& e) {
      failures.write(ordered_json{{"question_id", example.question_id},
                                  {"stage", "link"},
                                  {"error", e.what()}});
    }
  }

  return ordered_json{{"command", "chunk"},
                      {"examples", corpus.examples.size()},
                      {"chunks", chunks.count()},
                      {"failed", failures.count()},
                      {"out_dir", config.out_dir}};
}

ordered_json cmd_run(const config::RunConfig& config) {
  const auto& link_backend_cfg = config.backend_for(Stage::link);
  const auto& sql_backend_cfg = config.backend_for(Stage::sql);
  if (sql_backend_cfg.kind == infer::BackendKind::oracle_links)
    throw Error(ErrorKind::config, "oracle_links backend answers link prompts, not sql");
  if (link_backend_cfg.kind == infer::BackendKind::replay_gold_sql)
    throw Error(ErrorKind::config, "replay_gold_sql backend answers sql prompts, not links");

  LoadedCorpus corpus = load_corpus(config);
  freeze_config(config);
  prompts::TemplateSet templates = config.templates();

  artifacts::JsonlWriter failures(out_path(config, "failures.jsonl"));
  const bool direct = config.variant.sql_mode == prompts::SqlMode::direct;
  const bool perfect = config.variant.link_mode == prompts::LinkMode::perfect;
  const bool run_link_stage = !direct && !perfect;

  std::map<long long, SchemaLink> links;
  std::map<long long, ordered_json> validation_reports;
  std::size_t link_prompt_count = 0;
  std::size_t link_completion_count = 0;

  if (!direct && perfect) {
    links = gold_links_for(config, corpus, &failures);
    artifacts::JsonlWriter merged(out_path(config, "links.jsonl"));
    for (const auto& example : corpus.examples) {
      auto it = links.find(example.question_id);
      if (it == links.end()) continue;
      ordered_json rec;
      rec["question_id"] = example.question_id;
      rec["link"] = linkex::serialize_link(it->second);
      auto payload = artifacts::link_to_json(it->second);
      rec["columns"] = payload["columns"];
      rec["foreign_keys"] = payload["foreign_keys"];
      rec["source"] = "gold";
      merged.write(rec);
    }
  }

  if (run_link_stage) {
    // One flat prompt list across examples so parallelism spans the batch.
    std::vector<prompts::RenderedPrompt> link_prompts;
    std::vector<std::vector<std::size_t>> per_example(corpus.examples.size());
    for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
      const Example& example = corpus.examples[i];
      const DatabaseSchema* schema = corpus.store.find(example.db_id);
      if (!schema) {
        failures.write(ordered_json{{"question_id", example.question_id},
                                    {"stage", "link"},
                                    {"error", fmt::format("no schema for db '{}'",
                                                          example.db_id)}});
        continue;
      }
      try {
        std::vector<prompts::RenderedPrompt> rendered;
        if (config.variant.link_mode == prompts::LinkMode::chunked)
          rendered = prompts::build_link_prompts_chunked(*schema, example,
                                                         config.link_budget, templates);
        else
          rendered.push_back(prompts::build_link_prompt_nd(*schema, example,
                                                           config.link_budget, templates));
        for (auto& p : rendered) {
          p.variant = config.variant;
          per_example[i].push_back(link_prompts.size());
          link_prompts.push_back(std::move(p));
        }
      } catch (const Error& e) {
        failures.write(ordered_json{{"question_id", example.question_id},
                                    {"stage", "link"},
                                    {"error", e.what()}});
      }
    }

    {
      artifacts::JsonlWriter writer(out_path(config, "link_prompts.jsonl"));
      for (const auto& p : link_prompts) writer.write(prompt_record(p));
      link_prompt_count = writer.count();
    }

    infer::BackendContext context;
    if (link_backend_cfg.kind == infer::BackendKind::oracle_links)
      context.gold_links = gold_links_for(config, corpus, &failures);
    auto backend = infer::make_backend(link_backend_cfg, std::move(context));
    auto completions = infer::run_stage(*backend, link_prompts, config.parallelism);

    {
      artifacts::JsonlWriter writer(out_path(config, "link_completions.jsonl"));
      for (const auto& c : completions) writer.write(completion_record(c));
      link_completion_count = writer.count();
    }

    artifacts::JsonlWriter merged(out_path(config, "links.jsonl"));
    for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
      if (per_example[i].empty()) continue;
      const Example& example = corpus.examples[i];
      const DatabaseSchema* schema = corpus.store.find(example.db_id);

      std::vector<SchemaLink> parts;
      std::vector<std::string> flagged;
      for (std::size_t idx : per_example[i]) {
        const auto& completion = completions[idx];
        if (!completion.ok) {
          flagged.push_back(fmt::format("backend failure: {}", completion.error));
          failures.write(ordered_json{{"question_id", example.question_id},
                                      {"stage", "link"},
                                      {"error", completion.error}});
          continue;
        }
        auto parsed = postproc::parse_link_response(completion.raw_text,
                                                    link_prompts[idx].chunk_tables);
        parts.push_back(std::move(parsed.link));
        flagged.insert(flagged.end(), parsed.flagged.begin(), parsed.flagged.end());
      }

      SchemaLink merged_link = postproc::merge_links(parts);
      auto validation = postproc::validate_link(merged_link, *schema);

      ordered_json report;
      report["flagged"] = flagged;
      ordered_json repaired = ordered_json::array();
      for (const auto& r : validation.repaired)
        repaired.push_back(ordered_json{{"from", {r.raw.table, r.raw.column}},
                                        {"to", {r.canonical.table, r.canonical.column}},
                                        {"reason", r.reason}});
      report["repaired"] = std::move(repaired);
      ordered_json rejected = ordered_json::array();
      for (const auto& r : validation.rejected)
        rejected.push_back(ordered_json{{"pair", {r.raw.table, r.raw.column}},
                                        {"reason", r.reason}});
      report["rejected"] = std::move(rejected);
      report["rejected_foreign_keys"] = validation.rejected_fk_lines;

      links[example.question_id] = validation.accepted;
      validation_reports[example.question_id] = report;

      ordered_json rec;
      rec["question_id"] = example.question_id;
      rec["link"] = linkex::serialize_link(validation.accepted);
      auto payload = artifacts::link_to_json(validation.accepted);
      rec["columns"] = payload["columns"];
      rec["foreign_keys"] = payload["foreign_keys"];
      rec["source"] = "predicted";
      rec["validation"] = validation_reports[example.question_id];
      merged.write(rec);
    }
  }

  // Stage 2: one sql prompt per example that still has what it needs.
  std::vector<prompts::RenderedPrompt> sql_prompts;
  std::vector<std::size_t> sql_example_index;
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    const Example& example = corpus.examples[i];
    const DatabaseSchema* schema = corpus.store.find(example.db_id);
    if (!schema) {
      failures.write(ordered_json{{"question_id", example.question_id},
                                  {"stage", "sql"},
                                  {"error", fmt::format("no schema for db '{}'",
                                                        example.db_id)}});
      continue;
    }
    SchemaLink link;
    if (!direct) {
      auto it = links.find(example.question_id);
      if (it == links.end()) {
        failures.write(ordered_json{{"question_id", example.question_id},
                                    {"stage", "sql"},
                                    {"error", "no link from stage 1"}});
        continue;
      }
      link = it->second;
    }
    try {
      auto p = prompts::build_sql_prompt(config.variant, *schema, link, example,
                                         config.sql_budget, templates);
      sql_example_index.push_back(i);
      sql_prompts.push_back(std::move(p));
    } catch (const Error& e) {
      failures.write(ordered_json{{"question_id", example.question_id},
                                  {"stage", "sql"},
                                  {"error", e.what()}});
    }
  }

  {
    artifacts::JsonlWriter writer(out_path(config, "sql_prompts.jsonl"));
    for (const auto& p : sql_prompts) writer.write(prompt_record(p));
  }

  infer::BackendContext sql_context;
  if (sql_backend_cfg.kind == infer::BackendKind::replay_gold_sql)
    for (const auto& example : corpus.examples)
      sql_context.gold_sql[example.question_id] = example.gold_sql;
  auto sql_backend = infer::make_backend(sql_backend_cfg, std::move(sql_context));
  auto sql_completions = infer::run_stage(*sql_backend, sql_prompts, config.parallelism);

  {
    artifacts::JsonlWriter writer(out_path(config, "sql_completions.jsonl"));
    for (const auto& c : sql_completions) writer.write(completion_record(c));
  }

  artifacts::JsonlWriter predictions(out_path(config, "predictions.jsonl"));
  for (std::size_t k = 0; k < sql_completions.size(); ++k) {
    const Example& example = corpus.examples[sql_example_index[k]];
    const auto& completion = sql_completions[k];

    postproc::CleanedSql cleaned;
    if (completion.ok) {
      cleaned = postproc::clean_sql(completion.raw_text);
    } else {
      failures.write(ordered_json{{"question_id", example.question_id},
                                  {"stage", "sql"},
                                  {"error", completion.error}});
    }
    cleaned.question_id = example.question_id;

    ordered_json rec;
    rec["question_id"] = example.question_id;
    rec["sql"] = cleaned.sql;
    rec["extraction"] = postproc::extraction_name(cleaned.extraction);
    if (!direct) {
      auto it = links.find(example.question_id);
      if (it != links.end()) rec["link"] = artifacts::link_to_json(it->second);
      auto vit = validation_reports.find(example.question_id);
      if (vit != validation_reports.end()) rec["validation_report"] = vit->second;
    }
    predictions.write(rec);
  }

  return ordered_json{{"command", "run"},
                      {"variant", prompts::variant_name(config.variant)},
                      {"examples", corpus.examples.size()},
                      {"link_prompts", link_prompt_count},
                      {"link_completions", link_completion_count},
                      {"links", links.size()},
                      {"sql_prompts", sql_prompts.size()},
                      {"predictions", predictions.count()},
                      {"failures", failures.count()},
                      {"out_dir", config.out_dir}};
}

ordered_json cmd_eval(const config::RunConfig& config, const std::string& predictions_path) {
  LoadedCorpus corpus = load_corpus(config);
  freeze_config(config);

  std::string path = predictions_path.empty() ? out_path(config, "predictions.jsonl")
                                              : predictions_path;
  auto predictions = artifacts::load_predictions_jsonl(path);
  auto report = evalx::evaluate(corpus.examples, predictions, corpus.store,
                                config.timeout_ms, config.parallelism);

  artifacts::write_text_file(out_path(config, "report.json"),
                             evalx::report_to_json(report).dump(2) + "\n");
  std::string table = evalx::render_report(report, config.model_label);
  artifacts::write_text_file(out_path(config, "report.txt"), table);

  return ordered_json{{"command", "eval"},
                      {"predictions", path},
                      {"examples", corpus.examples.size()},
                      {"evaluated", report.total.count},
                      {"gold_errors", report.gold_errors},
                      {"accuracy_pct",
                       ordered_json{{"simple", report.simple.accuracy_pct},
                                    {"moderate", report.moderate.accuracy_pct},
                                    {"challenging", report.challenging.accuracy_pct},
                                    {"total", report.total.accuracy_pct}}},
                      {"table", table},
                      {"out_dir", config.out_dir}};
}

ordered_json cmd_export_sft(const config::RunConfig& config) {
  LoadedCorpus corpus = load_corpus(config);
  freeze_config(config);
  prompts::TemplateSet templates = config.templates();

  const bool non_trusting_sql =
      config.sft_stage == Stage::sql &&
      (config.variant.sql_mode == prompts::SqlMode::non_trusting ||
       config.variant.sql_mode == prompts::SqlMode::non_trusting_link_only);

  std::map<long long, SchemaLink> gold;
  const bool needs_gold =
      config.sft_stage == Stage::link ||
      (config.sft_stage == Stage::sql &&
       config.variant.sql_mode == prompts::SqlMode::trusting);
  artifacts::JsonlWriter failures(out_path(config, "failures.jsonl"));
  if (needs_gold) gold = gold_links_for(config, corpus, &failures);

  std::map<long long, SchemaLink> predicted;
  if (non_trusting_sql) {
    if (config.predicted_links_path.empty())
      throw Error(ErrorKind::config,
                  "non-trusting sql export needs 'predicted_links' (a links.jsonl from a "
                  "pipeline run)");
    predicted = artifacts::load_links_jsonl(config.predicted_links_path);
  }

  prompts::SftOptions opts;
  opts.variant = config.variant;
  opts.stage = config.sft_stage;
  opts.link_budget = config.link_budget;
  opts.sql_budget = config.sql_budget;
  opts.seed = config.seed;
  opts.train_fraction = config.train_fraction;
  opts.out_prefix = out_path(
      config, fmt::format("sft_{}_{}", stage_name(config.sft_stage),
                          config.sft_stage == Stage::link
                              ? prompts::link_mode_name(config.variant.link_mode)
                              : prompts::sql_mode_name(config.variant.sql_mode)));

  auto report = prompts::export_sft(corpus.examples, corpus.store, gold,
                                    non_trusting_sql ? &predicted : nullptr, templates, opts);

  return ordered_json{{"command", "export-sft"},
                      {"stage", stage_name(config.sft_stage)},
                      {"variant", prompts::variant_name(config.variant)},
                      {"train_examples", report.train_examples},
                      {"val_examples", report.val_examples},
                      {"train_records", report.train_records},
                      {"val_records", report.val_records},
                      {"skipped", report.skipped.size()},
                      {"skipped_detail", report.skipped},
                      {"files",
                       ordered_json::array({opts.out_prefix + "_train.jsonl",
                                            opts.out_prefix + "_val.jsonl"})},
                      {"out_dir", config.out_dir}};
}

ordered_json cmd_report(const std::string& report_json_path, const std::string& model_label) {
  ordered_json j;
  try {
    j = ordered_json::parse(artifacts::read_text_file(report_json_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse,
                fmt::format("report '{}': {}", report_json_path, e.what()));
  }
  auto report = evalx::report_from_json(j);
  std::string table = evalx::render_report(report, model_label);
  return ordered_json{{"command", "report"},
                      {"report", report_json_path},
                      {"table", table},
                      {"total_accuracy_pct", report.total.accuracy_pct}};
}

}  // namespace sqlink::commands
