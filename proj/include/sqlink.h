/* C interface to the sqlink pipeline library.
 *
 * All functions that can fail return an int status code and report details
 * through the context's last-error string. Strings returned through char**
 * out-parameters are heap-allocated; release them with sqlink_string_free.
 * A context must not be shared between threads without external locking;
 * distinct contexts are independent.
 */
#ifndef SQLINK_H
#define SQLINK_H

#ifdef __cplusplus
extern "C" {
#endif

#define SQLINK_OK 0
#define SQLINK_ERR_IO 1
#define SQLINK_ERR_PARSE 2
#define SQLINK_ERR_VALIDATION 3
#define SQLINK_ERR_CONFIG 4
#define SQLINK_ERR_BUDGET 5
#define SQLINK_ERR_BACKEND 6
#define SQLINK_ERR_TOOLING 7
#define SQLINK_ERR_UNSUPPORTED 8
#define SQLINK_ERR_INVALID_ARG 9
#define SQLINK_ERR_INTERNAL 10

typedef struct sqlink_ctx sqlink_ctx;
typedef struct sqlink_schema sqlink_schema;

const char* sqlink_version(void);

sqlink_ctx* sqlink_ctx_new(void);
void sqlink_ctx_free(sqlink_ctx* ctx);

/* Message of the most recent failure on this context; empty string when the
 * last call succeeded. The pointer stays valid until the next call that
 * takes this context. */
const char* sqlink_last_error(const sqlink_ctx* ctx);

void sqlink_string_free(char* s);

/* Pipeline commands. config_path names a JSON run config; overrides_json is
 * an optional JSON object whose keys replace top-level config keys (pass
 * NULL for none). On success *out_summary_json receives the command summary.
 * Artifacts are written under the configured output directory. */
int sqlink_cmd_extract_links(sqlink_ctx* ctx, const char* config_path,
                             const char* overrides_json, char** out_summary_json);
int sqlink_cmd_chunk(sqlink_ctx* ctx, const char* config_path, const char* overrides_json,
                     char** out_summary_json);
int sqlink_cmd_run(sqlink_ctx* ctx, const char* config_path, const char* overrides_json,
                   char** out_summary_json);
/* predictions_path may be NULL to evaluate <out_dir>/predictions.jsonl. */
int sqlink_cmd_eval(sqlink_ctx* ctx, const char* config_path, const char* overrides_json,
                    const char* predictions_path, char** out_summary_json);
int sqlink_cmd_export_sft(sqlink_ctx* ctx, const char* config_path,
                          const char* overrides_json, char** out_summary_json);
/* Renders the accuracy table from a persisted report.json. */
int sqlink_cmd_report(sqlink_ctx* ctx, const char* report_json_path, const char* model_label,
                      char** out_summary_json);

/* Schema access. descriptions_dir may be NULL; when given, per-column
 * description sheets (CSV) are attached. */
int sqlink_schema_open(sqlink_ctx* ctx, const char* db_file, const char* descriptions_dir,
                       sqlink_schema** out_schema);
void sqlink_schema_free(sqlink_schema* schema);
int sqlink_schema_to_json(sqlink_ctx* ctx, const sqlink_schema* schema, char** out_json);

/* Gold schema link of one SELECT statement, in the canonical serialized
 * form ("table(col, ...)" lines plus join lines, or "None"). */
int sqlink_extract_link(sqlink_ctx* ctx, const sqlink_schema* schema, const char* sql,
                        char** out_link);

/* SQL extraction cascade over raw model output. *out_extraction receives
 * one of: verbatim, fenced_block, first_statement, failed. */
int sqlink_clean_sql(sqlink_ctx* ctx, const char* raw_text, char** out_sql,
                     char** out_extraction);

/* Heuristic token count (ceil of bytes / 4). */
int sqlink_count_tokens(sqlink_ctx* ctx, const char* text, int* out_tokens);

#ifdef __cplusplus
}
#endif

#endif /* SQLINK_H */
