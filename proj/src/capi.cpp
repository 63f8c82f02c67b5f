#include "sqlink.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include <json.hpp>

#include "sqlink/artifacts.hpp"
#include "sqlink/chunker.hpp"
#include "sqlink/commands.hpp"
#include "sqlink/config.hpp"
#include "sqlink/corpus.hpp"
#include "sqlink/error.hpp"
#include "sqlink/linkex.hpp"
#include "sqlink/postproc.hpp"

using ordered_json = nlohmann::ordered_json;

struct sqlink_ctx {
  std::string last_error;
};

struct sqlink_schema {
  sqlink::DatabaseSchema schema;
};

namespace {

int code_of(sqlink::ErrorKind kind) {
  using sqlink::ErrorKind;
  switch (kind) {
    case ErrorKind::io: return SQLINK_ERR_IO;
    case ErrorKind::parse: return SQLINK_ERR_PARSE;
    case ErrorKind::validation: return SQLINK_ERR_VALIDATION;
    case ErrorKind::config: return SQLINK_ERR_CONFIG;
    case ErrorKind::budget: return SQLINK_ERR_BUDGET;
    case ErrorKind::backend: return SQLINK_ERR_BACKEND;
    case ErrorKind::tooling: return SQLINK_ERR_TOOLING;
    case ErrorKind::unsupported: return SQLINK_ERR_UNSUPPORTED;
  }
  return SQLINK_ERR_INTERNAL;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

int fail(sqlink_ctx* ctx, int code, const std::string& message) {
  if (ctx) ctx->last_error = message;
  return code;
}

template <typename Fn>
int guarded(sqlink_ctx* ctx, Fn&& fn) {
  if (!ctx) return SQLINK_ERR_INVALID_ARG;
  ctx->last_error.clear();
  try {
    return fn();
  } catch (const sqlink::Error& e) {
    return fail(ctx, code_of(e.kind()), e.what());
  } catch (const std::exception& e) {
    return fail(ctx, SQLINK_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(ctx, SQLINK_ERR_INTERNAL, "unknown error");
  }
}

int set_out(sqlink_ctx* ctx, char** out, const std::string& value) {
  char* copy = dup_string(value);
  if (!copy) return fail(ctx, SQLINK_ERR_INTERNAL, "out of memory");
  *out = copy;
  return SQLINK_OK;
}

ordered_json parse_overrides(const char* overrides_json) {
  if (!overrides_json || !*overrides_json) return ordered_json();
  ordered_json j = ordered_json::parse(overrides_json, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw sqlink::Error(sqlink::ErrorKind::config, "overrides must be a JSON object");
  return j;
}

using CommandFn = ordered_json (*)(const sqlink::config::RunConfig&);

int run_command(sqlink_ctx* ctx, const char* config_path, const char* overrides_json,
                char** out_summary_json, CommandFn command) {
  return guarded(ctx, [&] {
    if (!config_path || !out_summary_json)
      return fail(ctx, SQLINK_ERR_INVALID_ARG, "config_path and out pointer are required");
    auto config = sqlink::config::load_config(config_path, parse_overrides(overrides_json));
    ordered_json summary = command(config);
    return set_out(ctx, out_summary_json, summary.dump(2));
  });
}

}  // namespace

extern "C" {

const char* sqlink_version(void) { return "0.1.0"; }

sqlink_ctx* sqlink_ctx_new(void) { return new (std::nothrow) sqlink_ctx(); }

void sqlink_ctx_free(sqlink_ctx* ctx) { delete ctx; }

const char* sqlink_last_error(const sqlink_ctx* ctx) {
  return ctx ? ctx->last_error.c_str() : "";
}

void sqlink_string_free(char* s) { std::free(s); }

int sqlink_cmd_extract_links(sqlink_ctx* ctx, const char* config_path,
                             const char* overrides_json, char** out_summary_json) {
  return run_command(ctx, config_path, overrides_json, out_summary_json,
                     &sqlink::commands::cmd_extract_links);
}

int sqlink_cmd_chunk(sqlink_ctx* ctx, const char* config_path, const char* overrides_json,
                     char** out_summary_json) {
  return run_command(ctx, config_path, overrides_json, out_summary_json,
                     &sqlink::commands::cmd_chunk);
}

int sqlink_cmd_run(sqlink_ctx* ctx, const char* config_path, const char* overrides_json,
                   char** out_summary_json) {
  return run_command(ctx, config_path, overrides_json, out_summary_json,
                     &sqlink::commands::cmd_run);
}

int sqlink_cmd_eval(sqlink_ctx* ctx, const char* config_path, const char* overrides_json,
                    const char* predictions_path, char** out_summary_json) {
  return guarded(ctx, [&] {
    if (!config_path || !out_summary_json)
      return fail(ctx, SQLINK_ERR_INVALID_ARG, "config_path and out pointer are required");
    auto config = sqlink::config::load_config(config_path, parse_overrides(overrides_json));
    ordered_json summary = sqlink::commands::cmd_eval(
        config, predictions_path ? predictions_path : "");
    return set_out(ctx, out_summary_json, summary.dump(2));
  });
}

int sqlink_cmd_export_sft(sqlink_ctx* ctx, const char* config_path,
                          const char* overrides_json, char** out_summary_json) {
  return run_command(ctx, config_path, overrides_json, out_summary_json,
                     &sqlink::commands::cmd_export_sft);
}

int sqlink_cmd_report(sqlink_ctx* ctx, const char* report_json_path, const char* model_label,
                      char** out_summary_json) {
  return guarded(ctx, [&] {
    if (!report_json_path || !out_summary_json)
      return fail(ctx, SQLINK_ERR_INVALID_ARG, "report path and out pointer are required");
    ordered_json summary = sqlink::commands::cmd_report(
        report_json_path, model_label && *model_label ? model_label : "model");
    return set_out(ctx, out_summary_json, summary.dump(2));
  });
}

int sqlink_schema_open(sqlink_ctx* ctx, const char* db_file, const char* descriptions_dir,
                       sqlink_schema** out_schema) {
  return guarded(ctx, [&] {
    if (!db_file || !out_schema)
      return fail(ctx, SQLINK_ERR_INVALID_ARG, "db_file and out pointer are required");
    auto schema = sqlink::corpus::introspect_schema(db_file);
    if (descriptions_dir && *descriptions_dir)
      schema = sqlink::corpus::attach_descriptions(schema, descriptions_dir);
    *out_schema = new sqlink_schema{std::move(schema)};
    return SQLINK_OK;
  });
}

void sqlink_schema_free(sqlink_schema* schema) { delete schema; }

int sqlink_schema_to_json(sqlink_ctx* ctx, const sqlink_schema* schema, char** out_json) {
  return guarded(ctx, [&] {
    if (!schema || !out_json)
      return fail(ctx, SQLINK_ERR_INVALID_ARG, "schema and out pointer are required");
    ordered_json j;
    j["db_id"] = schema->schema.db_id;
    ordered_json tables = ordered_json::array();
    for (const auto& table : schema->schema.tables) {
      ordered_json cols = ordered_json::array();
      for (const auto& col : table.columns) {
        ordered_json c;
        c["name"] = col.name;
        c["type"] = col.sql_type;
        c["primary_key"] = col.is_primary_key;
        if (col.description) c["description"] = *col.description;
        if (col.value_description) c["value_description"] = *col.value_description;
        cols.push_back(std::move(c));
      }
      tables.push_back(ordered_json{{"name", table.name}, {"columns", std::move(cols)}});
    }
    j["tables"] = std::move(tables);
    ordered_json fks = ordered_json::array();
    for (const auto& fk : schema->schema.foreign_keys)
      fks.push_back(ordered_json::array(
          {fk.from_table, fk.from_column, fk.to_table, fk.to_column}));
    j["foreign_keys"] = std::move(fks);
    return set_out(ctx, out_json, j.dump(2));
  });
}

int sqlink_extract_link(sqlink_ctx* ctx, const sqlink_schema* schema, const char* sql,
                        char** out_link) {
  return guarded(ctx, [&] {
    if (!schema || !sql || !out_link)
      return fail(ctx, SQLINK_ERR_INVALID_ARG, "schema, sql and out pointer are required");
    auto link = sqlink::linkex::extract_links(sql, schema->schema);
    return set_out(ctx, out_link, sqlink::linkex::serialize_link(link));
  });
}

int sqlink_clean_sql(sqlink_ctx* ctx, const char* raw_text, char** out_sql,
                     char** out_extraction) {
  return guarded(ctx, [&] {
    if (!raw_text || !out_sql || !out_extraction)
      return fail(ctx, SQLINK_ERR_INVALID_ARG, "raw_text and out pointers are required");
    auto cleaned = sqlink::postproc::clean_sql(raw_text);
    int rc = set_out(ctx, out_sql, cleaned.sql);
    if (rc != SQLINK_OK) return rc;
    rc = set_out(ctx, out_extraction, sqlink::postproc::extraction_name(cleaned.extraction));
    if (rc != SQLINK_OK) {
      sqlink_string_free(*out_sql);
      *out_sql = nullptr;
    }
    return rc;
  });
}

int sqlink_count_tokens(sqlink_ctx* ctx, const char* text, int* out_tokens) {
  return guarded(ctx, [&] {
    if (!text || !out_tokens)
      return fail(ctx, SQLINK_ERR_INVALID_ARG, "text and out pointer are required");
    *out_tokens = sqlink::chunker::count_tokens(text, sqlink::chunker::TokenBudget{});
    return SQLINK_OK;
  });
}

}  // extern "C"
