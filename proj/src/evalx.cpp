#include "sqlink/evalx.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <sqlite3.h>

#include "sqlink/error.hpp"
#include "sqlink/text.hpp"

using ordered_json = nlohmann::ordered_json;

namespace sqlink::evalx {

namespace {

// Skips whitespace and comments, then requires SELECT or WITH.
bool is_select_statement(const std::string& sql) {
  std::size_t i = 0;
  while (i < sql.size()) {
    unsigned char c = static_cast<unsigned char>(sql[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (sql[i] == '-' && i + 1 < sql.size() && sql[i + 1] == '-') {
      auto nl = sql.find('\n', i);
      i = nl == std::string::npos ? sql.size() : nl + 1;
      continue;
    }
    if (sql[i] == '/' && i + 1 < sql.size() && sql[i + 1] == '*') {
      auto end = sql.find("*/", i + 2);
      i = end == std::string::npos ? sql.size() : end + 2;
      continue;
    }
    break;
  }
  auto word_is = [&](std::string_view kw) {
    if (i + kw.size() > sql.size()) return false;
    for (std::size_t k = 0; k < kw.size(); ++k) {
      char a = static_cast<char>(std::toupper(static_cast<unsigned char>(sql[i + k])));
      if (a != kw[k]) return false;
    }
    auto end = i + kw.size();
    if (end < sql.size()) {
      unsigned char next = static_cast<unsigned char>(sql[end]);
      if (std::isalnum(next) || next == '_') return false;
    }
    return true;
  };
  return word_is("SELECT") || word_is("WITH");
}

struct Deadline {
  std::chrono::steady_clock::time_point at;
  std::atomic<bool> hit{false};
};

int progress_callback(void* arg) {
  auto* deadline = static_cast<Deadline*>(arg);
  if (std::chrono::steady_clock::now() >= deadline->at) {
    deadline->hit.store(true, std::memory_order_relaxed);
    return 1;
  }
  return 0;
}

Value fetch_value(sqlite3_stmt* stmt, int col) {
  switch (sqlite3_column_type(stmt, col)) {
    case SQLITE_INTEGER:
      return static_cast<std::int64_t>(sqlite3_column_int64(stmt, col));
    case SQLITE_FLOAT: {
      double v = sqlite3_column_double(stmt, col);
      if (std::isfinite(v) && std::trunc(v) == v && v >= -9.2e18 && v <= 9.2e18)
        return static_cast<std::int64_t>(v);
      return v;
    }
    case SQLITE_TEXT: {
      const unsigned char* text = sqlite3_column_text(stmt, col);
      int n = sqlite3_column_bytes(stmt, col);
      return std::string(reinterpret_cast<const char*>(text), static_cast<std::size_t>(n));
    }
    case SQLITE_BLOB: {
      const void* data = sqlite3_column_blob(stmt, col);
      int n = sqlite3_column_bytes(stmt, col);
      return Blob{std::string(static_cast<const char*>(data ? data : ""),
                              static_cast<std::size_t>(n))};
    }
    default:
      return std::monostate{};
  }
}

}  // namespace

ExecResult execute_query(const std::string& db_file, const std::string& sql, int timeout_ms) {
  ExecResult r;
  if (!is_select_statement(sql)) {
    r.error = "only a single SELECT statement is executed";
    return r;
  }

  sqlite3* db = nullptr;
  if (sqlite3_open_v2(db_file.c_str(), &db, SQLITE_OPEN_READONLY, nullptr) != SQLITE_OK) {
    r.error = fmt::format("cannot open '{}': {}", db_file,
                          db ? sqlite3_errmsg(db) : "out of memory");
    sqlite3_close(db);
    return r;
  }

  Deadline deadline{std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms)};
  sqlite3_progress_handler(db, 1000, progress_callback, &deadline);

  sqlite3_stmt* stmt = nullptr;
  const char* tail = nullptr;
  if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt, &tail) != SQLITE_OK) {
    r.error = sqlite3_errmsg(db);
    sqlite3_finalize(stmt);
    sqlite3_close(db);
    return r;
  }
  if (!stmt) {
    r.error = "empty statement";
    sqlite3_close(db);
    return r;
  }
  if (tail && !trim(tail).empty()) {
    r.error = "multiple statements are not executed";
    sqlite3_finalize(stmt);
    sqlite3_close(db);
    return r;
  }
  if (!sqlite3_stmt_readonly(stmt)) {
    r.error = "statement is not read-only";
    sqlite3_finalize(stmt);
    sqlite3_close(db);
    return r;
  }

  const int ncols = sqlite3_column_count(stmt);
  int rc;
  while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
    Row row;
    row.reserve(static_cast<std::size_t>(ncols));
    for (int c = 0; c < ncols; ++c) row.push_back(fetch_value(stmt, c));
    r.rows.push_back(std::move(row));
  }
  if (rc == SQLITE_DONE) {
    r.ok = true;
  } else {
    r.timed_out = deadline.hit.load(std::memory_order_relaxed);
    r.error = r.timed_out ? fmt::format("timed out after {} ms", timeout_ms)
                          : sqlite3_errmsg(db);
    r.rows.clear();
  }
  sqlite3_finalize(stmt);
  sqlite3_close(db);
  return r;
}

namespace {

std::string row_key(const Row& row) {
  std::string key;
  for (const auto& cell : row) {
    std::visit(
        [&key](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::monostate>) {
            key += "N0:";
          } else if constexpr (std::is_same_v<T, std::int64_t>) {
            auto s = fmt::format("{}", v);
            key += fmt::format("I{}:{}", s.size(), s);
          } else if constexpr (std::is_same_v<T, double>) {
            auto s = fmt::format("{:.17g}", v);
            key += fmt::format("R{}:{}", s.size(), s);
          } else if constexpr (std::is_same_v<T, std::string>) {
            key += fmt::format("T{}:{}", v.size(), v);
          } else {
            key += fmt::format("B{}:{}", v.bytes.size(), v.bytes);
          }
        },
        cell);
  }
  return key;
}

std::vector<std::string> sorted_keys(const Rows& rows) {
  std::vector<std::string> keys;
  keys.reserve(rows.size());
  for (const auto& row : rows) keys.push_back(row_key(row));
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace

bool compare_results(const Rows& pred, const Rows& gold) {
  std::set<std::string> a, b;
  for (const auto& row : pred) a.insert(row_key(row));
  for (const auto& row : gold) b.insert(row_key(row));
  return a == b;
}

const char* status_name(Status s) {
  switch (s) {
    case Status::correct: return "correct";
    case Status::incorrect: return "incorrect";
    case Status::pred_error: return "pred_error";
    case Status::gold_error: return "gold_error";
    case Status::timeout: return "timeout";
  }
  return "incorrect";
}

std::optional<Status> status_from_string(std::string_view s) {
  if (ci_equal(s, "correct")) return Status::correct;
  if (ci_equal(s, "incorrect")) return Status::incorrect;
  if (ci_equal(s, "pred_error")) return Status::pred_error;
  if (ci_equal(s, "gold_error")) return Status::gold_error;
  if (ci_equal(s, "timeout")) return Status::timeout;
  return std::nullopt;
}

EvalReport fold_report(std::vector<ExecutionOutcome> outcomes) {
  EvalReport report;
  report.outcomes = std::move(outcomes);
  for (const auto& outcome : report.outcomes) {
    if (outcome.status == Status::gold_error) {
      ++report.gold_errors;
      continue;
    }
    StratumAccuracy* stratum = nullptr;
    switch (outcome.difficulty) {
      case Difficulty::simple: stratum = &report.simple; break;
      case Difficulty::moderate: stratum = &report.moderate; break;
      case Difficulty::challenging: stratum = &report.challenging; break;
    }
    ++stratum->count;
    ++report.total.count;
    if (outcome.status == Status::correct) {
      ++stratum->correct;
      ++report.total.correct;
    }
  }
  for (StratumAccuracy* s :
       {&report.simple, &report.moderate, &report.challenging, &report.total}) {
    s->accuracy_pct = s->count > 0 ? 100.0 * s->correct / s->count : 0.0;
  }
  return report;
}

EvalReport evaluate(const std::vector<Example>& examples,
                    const std::vector<postproc::CleanedSql>& predictions,
                    const corpus::SchemaStore& store, int timeout_ms, int parallelism) {
  if (parallelism < 1) throw Error(ErrorKind::config, "parallelism must be >= 1");
  if (timeout_ms <= 0) throw Error(ErrorKind::config, "timeout must be positive");

  std::map<long long, const postproc::CleanedSql*> by_id;
  for (const auto& p : predictions) by_id[p.question_id] = &p;

  std::set<std::string> missing;
  for (const auto& example : examples)
    if (!store.db_file(example.db_id)) missing.insert(example.db_id);
  if (!missing.empty())
    throw Error(ErrorKind::io,
                fmt::format("missing database files for: {}", fmt::join(missing, ", ")));

  std::vector<ExecutionOutcome> outcomes(examples.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= examples.size()) return;
      const Example& example = examples[i];
      const std::string& db_file = *store.db_file(example.db_id);

      ExecutionOutcome outcome;
      outcome.question_id = example.question_id;
      outcome.difficulty = example.difficulty;
      auto started = std::chrono::steady_clock::now();

      ExecResult gold = execute_query(db_file, example.gold_sql, timeout_ms);
      if (!gold.ok) {
        outcome.status = Status::gold_error;
        outcome.detail = gold.error;
      } else {
        outcome.gold_rows = static_cast<long long>(gold.rows.size());
        auto it = by_id.find(example.question_id);
        if (it == by_id.end()) {
          outcome.status = Status::pred_error;
          outcome.detail = "no prediction";
        } else if (it->second->extraction == postproc::Extraction::failed ||
                   it->second->sql.empty()) {
          outcome.status = Status::pred_error;
          outcome.detail = "sql extraction failed";
        } else {
          ExecResult pred = execute_query(db_file, it->second->sql, timeout_ms);
          if (pred.timed_out) {
            outcome.status = Status::timeout;
            outcome.detail = pred.error;
          } else if (!pred.ok) {
            outcome.status = Status::pred_error;
            outcome.detail = pred.error;
          } else {
            outcome.pred_rows = static_cast<long long>(pred.rows.size());
            auto pred_keys = sorted_keys(pred.rows);
            auto gold_keys = sorted_keys(gold.rows);
            std::set<std::string> pred_set(pred_keys.begin(), pred_keys.end());
            std::set<std::string> gold_set(gold_keys.begin(), gold_keys.end());
            if (pred_set == gold_set) {
              outcome.status = Status::correct;
              outcome.multiset_mismatch = pred_keys != gold_keys;
            } else {
              outcome.status = Status::incorrect;
            }
          }
        }
      }
      outcome.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - started)
                                 .count();
      outcomes[i] = std::move(outcome);
    }
  };

  std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(parallelism), examples.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  return fold_report(std::move(outcomes));
}

std::string render_report(const EvalReport& report, const std::string& model_label) {
  const std::size_t label_width = std::max<std::size_t>(model_label.size(), 8) + 2;
  auto pct = [](const StratumAccuracy& s) { return fmt::format("{:.2f}%", s.accuracy_pct); };
  std::string out;
  out += fmt::format("{:<{}}{:<12}{:<12}{:<14}{:<12}\n", "Model", label_width, "Simple",
                     "Moderate", "Challenging", "Total");
  out += fmt::format("{:<{}}{:<12}{:<12}{:<14}{:<12}\n", model_label, label_width,
                     pct(report.simple), pct(report.moderate), pct(report.challenging),
                     pct(report.total));
  out += fmt::format("{:<{}}{:<12}{:<12}{:<14}{:<12}\n", "examples", label_width,
                     report.simple.count, report.moderate.count, report.challenging.count,
                     report.total.count);
  if (report.gold_errors > 0)
    out += fmt::format("gold errors excluded: {}\n", report.gold_errors);
  return out;
}

namespace {

ordered_json stratum_to_json(const StratumAccuracy& s) {
  return ordered_json{{"count", s.count}, {"correct", s.correct},
                      {"accuracy_pct", s.accuracy_pct}};
}

StratumAccuracy stratum_from_json(const ordered_json& j) {
  StratumAccuracy s;
  s.count = j.at("count").get<int>();
  s.correct = j.at("correct").get<int>();
  s.accuracy_pct = j.at("accuracy_pct").get<double>();
  return s;
}

}  // namespace

ordered_json report_to_json(const EvalReport& report) {
  ordered_json j;
  j["by_difficulty"] = ordered_json{{"simple", stratum_to_json(report.simple)},
                                    {"moderate", stratum_to_json(report.moderate)},
                                    {"challenging", stratum_to_json(report.challenging)}};
  j["total"] = stratum_to_json(report.total);
  j["gold_errors"] = report.gold_errors;
  ordered_json outcomes = ordered_json::array();
  for (const auto& o : report.outcomes) {
    ordered_json rec;
    rec["question_id"] = o.question_id;
    rec["status"] = status_name(o.status);
    rec["difficulty"] = difficulty_name(o.difficulty);
    rec["pred_rows"] = o.pred_rows ? ordered_json(*o.pred_rows) : ordered_json(nullptr);
    rec["gold_rows"] = o.gold_rows ? ordered_json(*o.gold_rows) : ordered_json(nullptr);
    rec["multiset_mismatch"] = o.multiset_mismatch;
    rec["detail"] = o.detail;
    outcomes.push_back(std::move(rec));
  }
  j["outcomes"] = std::move(outcomes);
  return j;
}

EvalReport report_from_json(const ordered_json& j) {
  EvalReport report;
  report.simple = stratum_from_json(j.at("by_difficulty").at("simple"));
  report.moderate = stratum_from_json(j.at("by_difficulty").at("moderate"));
  report.challenging = stratum_from_json(j.at("by_difficulty").at("challenging"));
  report.total = stratum_from_json(j.at("total"));
  report.gold_errors = j.at("gold_errors").get<int>();
  for (const auto& rec : j.at("outcomes")) {
    ExecutionOutcome o;
    o.question_id = rec.at("question_id").get<long long>();
    auto status = status_from_string(rec.at("status").get<std::string>());
    if (!status)
      throw Error(ErrorKind::parse,
                  fmt::format("unknown status '{}'", rec.at("status").get<std::string>()));
    o.status = *status;
    auto difficulty = difficulty_from_string(rec.at("difficulty").get<std::string>());
    if (!difficulty)
      throw Error(ErrorKind::parse, fmt::format("unknown difficulty '{}'",
                                                rec.at("difficulty").get<std::string>()));
    o.difficulty = *difficulty;
    if (!rec.at("pred_rows").is_null()) o.pred_rows = rec.at("pred_rows").get<long long>();
    if (!rec.at("gold_rows").is_null()) o.gold_rows = rec.at("gold_rows").get<long long>();
    o.multiset_mismatch = rec.at("multiset_mismatch").get<bool>();
    o.detail = rec.at("detail").get<std::string>();
    report.outcomes.push_back(std::move(o));
  }
  return report;
}

namespace {

std::set<std::string> pair_set(const SchemaLink& link) {
  std::set<std::string> out;
  for (const auto& ref : link.columns)
    out.insert(to_lower(ref.table) + "\x1f" + to_lower(ref.column));
  return out;
}

std::set<std::string> table_set(const SchemaLink& link) {
  std::set<std::string> out;
  for (const auto& name : link.tables()) out.insert(to_lower(name));
  return out;
}

std::size_t intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& x : a)
    if (b.count(x)) ++n;
  return n;
}

}  // namespace

LinkMetrics link_metrics(const std::map<long long, SchemaLink>& pred,
                         const std::map<long long, SchemaLink>& gold) {
  LinkMetrics m;
  std::set<long long> ids;
  for (const auto& [id, _] : pred) ids.insert(id);
  for (const auto& [id, _] : gold) ids.insert(id);

  static const SchemaLink kEmpty;
  long long tp_sum = 0, fp_sum = 0, fn_sum = 0;
  long long table_tp = 0, table_fn = 0;
  double p_sum = 0, r_sum = 0, f_sum = 0;

  for (long long id : ids) {
    auto pit = pred.find(id);
    auto git = gold.find(id);
    const SchemaLink& p_link = pit == pred.end() ? kEmpty : pit->second;
    const SchemaLink& g_link = git == gold.end() ? kEmpty : git->second;

    auto p_pairs = pair_set(p_link);
    auto g_pairs = pair_set(g_link);
    LinkScore score;
    score.question_id = id;
    score.tp = static_cast<int>(intersection_size(p_pairs, g_pairs));
    score.fp = static_cast<int>(p_pairs.size()) - score.tp;
    score.fn = static_cast<int>(g_pairs.size()) - score.tp;

    score.precision = score.tp + score.fp > 0
                          ? static_cast<double>(score.tp) / (score.tp + score.fp)
                          : (g_pairs.empty() ? 1.0 : 0.0);
    score.recall = score.tp + score.fn > 0
                       ? static_cast<double>(score.tp) / (score.tp + score.fn)
                       : 1.0;
    score.f1 = score.precision + score.recall > 0
                   ? 2.0 * score.precision * score.recall / (score.precision + score.recall)
                   : 0.0;

    auto p_tables = table_set(p_link);
    auto g_tables = table_set(g_link);
    auto t_tp = intersection_size(p_tables, g_tables);
    score.table_recall =
        g_tables.empty() ? 1.0 : static_cast<double>(t_tp) / g_tables.size();

    tp_sum += score.tp;
    fp_sum += score.fp;
    fn_sum += score.fn;
    table_tp += static_cast<long long>(t_tp);
    table_fn += static_cast<long long>(g_tables.size() - t_tp);
    p_sum += score.precision;
    r_sum += score.recall;
    f_sum += score.f1;
    m.per_example.push_back(score);
  }

  const auto n = static_cast<double>(m.per_example.size());
  if (n > 0) {
    m.micro_precision = tp_sum + fp_sum > 0 ? static_cast<double>(tp_sum) / (tp_sum + fp_sum)
                                            : 1.0;
    m.micro_recall = tp_sum + fn_sum > 0 ? static_cast<double>(tp_sum) / (tp_sum + fn_sum)
                                         : 1.0;
    m.micro_f1 = m.micro_precision + m.micro_recall > 0
                     ? 2.0 * m.micro_precision * m.micro_recall /
                           (m.micro_precision + m.micro_recall)
                     : 0.0;
    m.micro_table_recall = table_tp + table_fn > 0
                               ? static_cast<double>(table_tp) / (table_tp + table_fn)
                               : 1.0;
    m.macro_precision = p_sum / n;
    m.macro_recall = r_sum / n;
    m.macro_f1 = f_sum / n;
  }
  return m;
}

}  // namespace sqlink::evalx
