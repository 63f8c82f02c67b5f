#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sqlink/corpus.hpp"
#include "sqlink/postproc.hpp"
#include "sqlink/types.hpp"

namespace sqlink::evalx {

// One result cell. Whole-number reals normalize to integers at fetch time so
// driver type affinity cannot flip a comparison.
struct Blob {
  std::string bytes;
  bool operator==(const Blob&) const = default;
};
using Value = std::variant<std::monostate, std::int64_t, double, std::string, Blob>;
using Row = std::vector<Value>;
using Rows = std::vector<Row>;

struct ExecResult {
  bool ok = false;
  bool timed_out = false;
  Rows rows;
  std::string error;
};

// Read-only execution with a hard timeout. Statements that are not a single
// SELECT (or WITH ... SELECT) are rejected without touching the database.
ExecResult execute_query(const std::string& db_file, const std::string& sql, int timeout_ms);

// Set equality: row order and duplicates are ignored, column order within a
// row is significant.
bool compare_results(const Rows& pred, const Rows& gold);

enum class Status { correct, incorrect, pred_error, gold_error, timeout };

const char* status_name(Status s);
std::optional<Status> status_from_string(std::string_view s);

struct ExecutionOutcome {
  long long question_id = 0;
  Status status = Status::incorrect;
  Difficulty difficulty = Difficulty::simple;
  std::optional<long long> pred_rows;
  std::optional<long long> gold_rows;
  long long wall_time_ms = 0;  // not serialized; reports must be re-foldable bit-identically
  // Result sets match while duplicate counts differ; correct under the
  // benchmark's set semantics but worth surfacing.
  bool multiset_mismatch = false;
  std::string detail;
};

struct StratumAccuracy {
  int count = 0;  // gold_error examples excluded
  int correct = 0;
  double accuracy_pct = 0.0;
};

struct EvalReport {
  std::vector<ExecutionOutcome> outcomes;
  StratumAccuracy simple;
  StratumAccuracy moderate;
  StratumAccuracy challenging;
  StratumAccuracy total;
  int gold_errors = 0;
};

// Pure fold over outcomes; evaluate() uses it and tests re-fold persisted
// outcomes to check report fidelity.
EvalReport fold_report(std::vector<ExecutionOutcome> outcomes);

// Missing or failed predictions score incorrect (pred_error); examples whose
// gold SQL will not run are excluded from denominators. Throws only for run
// errors (missing databases, bad parallelism).
EvalReport evaluate(const std::vector<Example>& examples,
                    const std::vector<postproc::CleanedSql>& predictions,
                    const corpus::SchemaStore& store, int timeout_ms, int parallelism);

// Accuracy table: Model / Simple / Moderate / Challenging / Total.
std::string render_report(const EvalReport& report, const std::string& model_label);

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::ordered_json& j);

struct LinkScore {
  long long question_id = 0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double table_recall = 0.0;
};

struct LinkMetrics {
  std::vector<LinkScore> per_example;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double micro_table_recall = 0.0;
};

// Column-pair precision/recall/F1 plus table-level recall. An example with
// nothing to find scores recall 1; an empty prediction against a non-empty
// gold scores precision 0.
LinkMetrics link_metrics(const std::map<long long, SchemaLink>& pred,
                         const std::map<long long, SchemaLink>& gold);

}  // namespace sqlink::evalx
