#include <doctest.h>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "sqlink/corpus.hpp"
#include "sqlink/error.hpp"
#include "sqlink/evalx.hpp"
#include "sqlink/postproc.hpp"
#include "sqlink/types.hpp"
#include "support.hpp"

using namespace sqlink;
namespace ev = sqlink::evalx;
using ordered_json = nlohmann::ordered_json;

namespace {

// Runs forever until the progress handler pulls the plug.
const char* kSpinQuery =
    "WITH RECURSIVE spin(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM spin) "
    "SELECT COUNT(*) FROM spin";

Example make_example(long long qid, std::string db_id, std::string gold,
                     Difficulty difficulty = Difficulty::simple) {
  Example ex;
  ex.question_id = qid;
  ex.db_id = std::move(db_id);
  ex.question = fmt::format("question {}", qid);
  ex.gold_sql = std::move(gold);
  ex.difficulty = difficulty;
  return ex;
}

postproc::CleanedSql make_pred(long long qid, std::string sql,
                               postproc::Extraction extraction = postproc::Extraction::verbatim) {
  postproc::CleanedSql p;
  p.question_id = qid;
  p.sql = std::move(sql);
  p.extraction = extraction;
  return p;
}

}  // namespace

TEST_CASE("query execution") {
  testsup::TempDir dir;
  auto db = (dir / "shop.sqlite").string();
  testsup::build_db(db, testsup::shop_spec());

  SUBCASE("rows and native types") {
    auto r = ev::execute_query(db, "SELECT id, name FROM customers ORDER BY id", 5000);
    REQUIRE(r.ok);
    REQUIRE(r.rows.size() == 3);
    CHECK(std::get<std::int64_t>(r.rows[0][0]) == 1);
    CHECK(std::get<std::string>(r.rows[0][1]) == "Ada");
    CHECK(std::get<std::string>(r.rows[2][1]) == "Cy");
  }

  SUBCASE("whole reals come back as integers") {
    auto whole = ev::execute_query(db, "SELECT total FROM orders WHERE id = 1", 5000);
    REQUIRE(whole.ok);
    CHECK(std::get<std::int64_t>(whole.rows[0][0]) == 17);

    auto fractional = ev::execute_query(db, "SELECT total FROM orders WHERE id = 2", 5000);
    REQUIRE(fractional.ok);
    CHECK(std::get<double>(fractional.rows[0][0]) == 2.5);

    // The normalized 17.0 equals a literal 17 under comparison.
    auto as_real = ev::execute_query(db, "SELECT 17.0", 5000);
    auto as_int = ev::execute_query(db, "SELECT 17", 5000);
    CHECK(ev::compare_results(as_real.rows, as_int.rows));
  }

  SUBCASE("null cells") {
    auto r = ev::execute_query(db, "SELECT NULL", 5000);
    REQUIRE(r.ok);
    CHECK(std::holds_alternative<std::monostate>(r.rows[0][0]));
  }

  SUBCASE("only SELECT is allowed in") {
    for (const char* bad : {"DELETE FROM customers", "UPDATE customers SET name = 'x'",
                            "INSERT INTO customers VALUES (9, 'x', 'y', 'z')",
                            "PRAGMA table_info(customers)", "VACUUM", ""}) {
      CAPTURE(bad);
      auto r = ev::execute_query(db, bad, 5000);
      CHECK_FALSE(r.ok);
      CHECK(r.error == "only a single SELECT statement is executed");
    }
  }

  SUBCASE("leading comments do not hide the SELECT") {
    auto r = ev::execute_query(db, "-- count\n/* them */ SELECT COUNT(*) FROM orders", 5000);
    REQUIRE(r.ok);
    CHECK(std::get<std::int64_t>(r.rows[0][0]) == 3);
  }

  SUBCASE("WITH counts as a select") {
    auto r = ev::execute_query(db, "WITH t AS (SELECT 2 AS n) SELECT n FROM t", 5000);
    REQUIRE(r.ok);
    CHECK(std::get<std::int64_t>(r.rows[0][0]) == 2);
  }

  SUBCASE("multiple statements are refused") {
    auto r = ev::execute_query(db, "SELECT 1; SELECT 2", 5000);
    CHECK_FALSE(r.ok);
    CHECK(r.error == "multiple statements are not executed");
    CHECK(ev::execute_query(db, "SELECT 1;", 5000).ok);
  }

  SUBCASE("writes dressed as WITH are refused") {
    auto r = ev::execute_query(
        db, "WITH x(v) AS (SELECT 9) INSERT INTO customers SELECT v, 'a', 'b', 'c' FROM x",
        5000);
    CHECK_FALSE(r.ok);
    CHECK(r.error == "statement is not read-only");
  }

  SUBCASE("sqlite errors are passed along") {
    auto r = ev::execute_query(db, "SELECT nope FROM customers", 5000);
    CHECK_FALSE(r.ok);
    CHECK(r.error.find("no such column") != std::string::npos);
  }

  SUBCASE("missing database file") {
    auto r = ev::execute_query((dir / "absent.sqlite").string(), "SELECT 1", 5000);
    CHECK_FALSE(r.ok);
    CHECK(r.error.rfind("cannot open", 0) == 0);
  }

  SUBCASE("runaway queries hit the timeout") {
    auto r = ev::execute_query(db, kSpinQuery, 150);
    CHECK_FALSE(r.ok);
    CHECK(r.timed_out);
    CHECK(r.error == "timed out after 150 ms");
    CHECK(r.rows.empty());
  }
}

TEST_CASE("result comparison") {
  using Rows = ev::Rows;
  auto I = [](std::int64_t v) { return ev::Value{v}; };
  auto S = [](const char* v) { return ev::Value{std::string(v)}; };

  SUBCASE("duplicates and order are ignored") {
    CHECK(ev::compare_results(Rows{{I(1)}, {I(1)}}, Rows{{I(1)}}));
    CHECK(ev::compare_results(Rows{{I(1)}, {I(2)}}, Rows{{I(2)}, {I(1)}}));
    CHECK(ev::compare_results(Rows{}, Rows{}));
  }

  SUBCASE("column order within a row matters") {
    CHECK_FALSE(ev::compare_results(Rows{{I(1), I(2)}}, Rows{{I(2), I(1)}}));
  }

  SUBCASE("missing rows fail") {
    CHECK_FALSE(ev::compare_results(Rows{}, Rows{{I(1)}}));
    CHECK_FALSE(ev::compare_results(Rows{{I(1)}}, Rows{{I(1)}, {I(2)}}));
  }

  SUBCASE("null, zero and the string zero are all different") {
    CHECK_FALSE(ev::compare_results(Rows{{ev::Value{}}}, Rows{{I(0)}}));
    CHECK_FALSE(ev::compare_results(Rows{{S("0")}}, Rows{{I(0)}}));
    CHECK_FALSE(ev::compare_results(Rows{{S("")}}, Rows{{ev::Value{}}}));
  }

  SUBCASE("int and real cells differ unless normalized at fetch") {
    CHECK_FALSE(ev::compare_results(Rows{{ev::Value{17.0}}}, Rows{{I(17)}}));
  }

  SUBCASE("text and blob cells differ") {
    CHECK_FALSE(ev::compare_results(Rows{{S("ab")}}, Rows{{ev::Value{ev::Blob{"ab"}}}}));
  }

  SUBCASE("cell boundaries cannot be gamed by concatenation") {
    CHECK_FALSE(ev::compare_results(Rows{{S("ab"), S("")}}, Rows{{S("a"), S("b")}}));
  }
}

TEST_CASE("status names") {
  for (auto s : {ev::Status::correct, ev::Status::incorrect, ev::Status::pred_error,
                 ev::Status::gold_error, ev::Status::timeout}) {
    auto parsed = ev::status_from_string(ev::status_name(s));
    REQUIRE(parsed.has_value());
    CHECK(*parsed == s);
  }
  CHECK_FALSE(ev::status_from_string("mostly_correct").has_value());
}

TEST_CASE("end-to-end evaluation") {
  testsup::TempDir dir;
  auto db = (dir / "shop.sqlite").string();
  testsup::build_db(db, testsup::shop_spec());
  corpus::SchemaStore store;
  store.add(corpus::introspect_schema(db), db);

  std::vector<Example> examples = {
      make_example(1, "shop", "SELECT DISTINCT city FROM customers", Difficulty::simple),
      make_example(2, "shop", "SELECT name FROM customers WHERE id = 1", Difficulty::simple),
      make_example(3, "shop", "SELECT COUNT(*) FROM orders", Difficulty::moderate),
      make_example(4, "shop", "SELECT price FROM products", Difficulty::challenging),
      make_example(5, "shop", "SELECT stock FROM products", Difficulty::simple),
      make_example(6, "shop", "SELECT missing_col FROM customers", Difficulty::moderate),
      make_example(7, "shop", "SELECT 1", Difficulty::moderate),
  };
  std::vector<postproc::CleanedSql> predictions = {
      make_pred(1, "SELECT city FROM customers"),  // right set, duplicate Paris
      make_pred(2, "SELECT name FROM customers WHERE id = 2"),
      make_pred(3, "SELECT 3"),
      make_pred(4, "", postproc::Extraction::failed),
      // question 5 has no prediction at all
      make_pred(6, "SELECT 1"),  // never scored: the gold query is broken
      make_pred(7, kSpinQuery),
  };

  auto report = ev::evaluate(examples, predictions, store, 250, 2);

  SUBCASE("statuses and details") {
    REQUIRE(report.outcomes.size() == 7);
    CHECK(report.outcomes[0].status == ev::Status::correct);
    CHECK(report.outcomes[0].multiset_mismatch);
    CHECK(report.outcomes[0].pred_rows == 3);
    CHECK(report.outcomes[0].gold_rows == 2);

    CHECK(report.outcomes[1].status == ev::Status::incorrect);
    CHECK_FALSE(report.outcomes[1].multiset_mismatch);

    CHECK(report.outcomes[2].status == ev::Status::correct);
    CHECK_FALSE(report.outcomes[2].multiset_mismatch);

    CHECK(report.outcomes[3].status == ev::Status::pred_error);
    CHECK(report.outcomes[3].detail == "sql extraction failed");

    CHECK(report.outcomes[4].status == ev::Status::pred_error);
    CHECK(report.outcomes[4].detail == "no prediction");

    CHECK(report.outcomes[5].status == ev::Status::gold_error);
    CHECK(report.outcomes[5].detail.find("no such column") != std::string::npos);
    CHECK_FALSE(report.outcomes[5].gold_rows.has_value());

    CHECK(report.outcomes[6].status == ev::Status::timeout);
    CHECK(report.outcomes[6].detail == "timed out after 250 ms");
  }

  SUBCASE("strata exclude gold errors") {
    CHECK(report.simple.count == 3);
    CHECK(report.simple.correct == 1);
    CHECK(report.moderate.count == 2);  // the broken gold question is excluded
    CHECK(report.moderate.correct == 1);
    CHECK(report.challenging.count == 1);
    CHECK(report.challenging.correct == 0);
    CHECK(report.total.count == 6);
    CHECK(report.total.correct == 2);
    CHECK(report.gold_errors == 1);
    CHECK(report.total.accuracy_pct == doctest::Approx(100.0 * 2 / 6));
  }

  SUBCASE("re-folding the outcomes reproduces the report") {
    auto refolded = ev::fold_report(report.outcomes);
    CHECK(refolded.simple.count == report.simple.count);
    CHECK(refolded.total.correct == report.total.correct);
    CHECK(refolded.total.accuracy_pct == report.total.accuracy_pct);
    CHECK(refolded.gold_errors == report.gold_errors);
  }

  SUBCASE("json round-trip is faithful") {
    auto dumped = ev::report_to_json(report).dump(2);
    auto restored = ev::report_from_json(ordered_json::parse(dumped));
    REQUIRE(restored.outcomes.size() == report.outcomes.size());
    for (std::size_t i = 0; i < report.outcomes.size(); ++i) {
      CHECK(restored.outcomes[i].question_id == report.outcomes[i].question_id);
      CHECK(restored.outcomes[i].status == report.outcomes[i].status);
      CHECK(restored.outcomes[i].difficulty == report.outcomes[i].difficulty);
      CHECK(restored.outcomes[i].pred_rows == report.outcomes[i].pred_rows);
      CHECK(restored.outcomes[i].gold_rows == report.outcomes[i].gold_rows);
      CHECK(restored.outcomes[i].multiset_mismatch == report.outcomes[i].multiset_mismatch);
      CHECK(restored.outcomes[i].detail == report.outcomes[i].detail);
    }
    auto refolded = ev::fold_report(restored.outcomes);
    CHECK(std::abs(refolded.total.accuracy_pct - report.total.accuracy_pct) < 0.005);
    CHECK(ev::render_report(refolded, "m") == ev::render_report(report, "m"));

    auto j = ev::report_to_json(report);
    CHECK(j.at("by_difficulty").at("simple").at("count").get<int>() == 3);
    CHECK(j.at("total").at("correct").get<int>() == 2);
    CHECK(j.at("gold_errors").get<int>() == 1);
    CHECK(j.at("outcomes").size() == 7);
    CHECK(j.at("outcomes")[5].at("pred_rows").is_null());
  }

  SUBCASE("parallel and serial evaluation agree") {
    auto serial = ev::evaluate(examples, predictions, store, 250, 1);
    REQUIRE(serial.outcomes.size() == report.outcomes.size());
    for (std::size_t i = 0; i < serial.outcomes.size(); ++i) {
      CHECK(serial.outcomes[i].status == report.outcomes[i].status);
      CHECK(serial.outcomes[i].detail == report.outcomes[i].detail);
    }
    CHECK(serial.total.accuracy_pct == report.total.accuracy_pct);
  }

  SUBCASE("bad run parameters") {
    CHECK_THROWS_WITH_AS(ev::evaluate(examples, predictions, store, 250, 0),
                         "parallelism must be >= 1", Error);
    CHECK_THROWS_WITH_AS(ev::evaluate(examples, predictions, store, 0, 1),
                         "timeout must be positive", Error);
  }

  SUBCASE("missing databases abort up front") {
    auto bad = examples;
    bad.push_back(make_example(8, "warehouse", "SELECT 1"));
    bad.push_back(make_example(9, "archive", "SELECT 1"));
    CHECK_THROWS_WITH_AS(ev::evaluate(bad, predictions, store, 250, 1),
                         "missing database files for: archive, warehouse", Error);
  }
}

TEST_CASE("report rendering") {
  std::vector<ev::ExecutionOutcome> outcomes(3);
  outcomes[0].question_id = 1;
  outcomes[0].status = ev::Status::correct;
  outcomes[0].difficulty = Difficulty::simple;
  outcomes[1].question_id = 2;
  outcomes[1].status = ev::Status::incorrect;
  outcomes[1].difficulty = Difficulty::simple;
  outcomes[2].question_id = 3;
  outcomes[2].status = ev::Status::correct;
  outcomes[2].difficulty = Difficulty::moderate;

  SUBCASE("fixed-width table") {
    auto report = ev::fold_report(outcomes);
    CHECK(ev::render_report(report, "m1") ==
          "Model     Simple      Moderate    Challenging   Total       \n"
          "m1        50.00%      100.00%     0.00%         66.67%      \n"
          "examples  2           1           0             3           \n");
  }

  SUBCASE("long labels widen the first column") {
    auto report = ev::fold_report(outcomes);
    auto text = ev::render_report(report, "a-much-longer-label");
    CHECK(text.find("a-much-longer-label  50.00%") != std::string::npos);
  }

  SUBCASE("gold errors get a footer") {
    ev::ExecutionOutcome broken;
    broken.question_id = 4;
    broken.status = ev::Status::gold_error;
    outcomes.push_back(broken);
    auto report = ev::fold_report(outcomes);
    auto text = ev::render_report(report, "m1");
    CHECK(text.find("gold errors excluded: 1\n") != std::string::npos);
    CHECK(report.total.count == 3);  // unchanged by the gold error
  }
}

TEST_CASE("schema link metrics") {
  auto link_of = [](std::vector<std::pair<const char*, const char*>> pairs) {
    SchemaLink link;
    for (auto& [t, c] : pairs) link.add(ColumnRef{t, c});
    return link;
  };

  SUBCASE("hand-computed two-example batch") {
    std::map<long long, SchemaLink> gold;
    gold[1] = link_of({{"schools", "CDSCode"}, {"frpm", "CDSCode"}});
    gold[2] = link_of({{"orders", "id"}, {"orders", "total"}});
    std::map<long long, SchemaLink> pred;
    pred[1] = link_of({{"SCHOOLS", "cdscode"}, {"schools", "Charter"}, {"frpm", "CDSCode"}});
    pred[2] = link_of({{"orders", "id"}});

    auto m = ev::link_metrics(pred, gold);
    REQUIRE(m.per_example.size() == 2);

    const auto& one = m.per_example[0];
    CHECK(one.question_id == 1);
    CHECK(one.tp == 2);
    CHECK(one.fp == 1);
    CHECK(one.fn == 0);
    CHECK(one.precision == doctest::Approx(2.0 / 3.0));
    CHECK(one.recall == doctest::Approx(1.0));
    CHECK(one.table_recall == doctest::Approx(1.0));

    const auto& two = m.per_example[1];
    CHECK(two.tp == 1);
    CHECK(two.fp == 0);
    CHECK(two.fn == 1);
    CHECK(two.precision == doctest::Approx(1.0));
    CHECK(two.recall == doctest::Approx(0.5));
    CHECK(two.table_recall == doctest::Approx(1.0));

    CHECK(m.micro_precision == doctest::Approx(3.0 / 4.0));
    CHECK(m.micro_recall == doctest::Approx(3.0 / 4.0));
    CHECK(m.micro_f1 == doctest::Approx(3.0 / 4.0));
    CHECK(m.macro_precision == doctest::Approx((2.0 / 3.0 + 1.0) / 2));
    CHECK(m.macro_recall == doctest::Approx(0.75));
    CHECK(m.micro_table_recall == doctest::Approx(1.0));
  }

  SUBCASE("empty-side conventions") {
    std::map<long long, SchemaLink> gold;
    std::map<long long, SchemaLink> pred;

    // Nothing to find, nothing predicted.
    gold[1] = SchemaLink{};
    pred[1] = SchemaLink{};
    // Nothing to find, something predicted.
    gold[2] = SchemaLink{};
    pred[2] = link_of({{"orders", "id"}});
    // Something to find, nothing predicted.
    gold[3] = link_of({{"orders", "id"}});
    pred[3] = SchemaLink{};

    auto m = ev::link_metrics(pred, gold);
    REQUIRE(m.per_example.size() == 3);
    CHECK(m.per_example[0].precision == doctest::Approx(1.0));
    CHECK(m.per_example[0].recall == doctest::Approx(1.0));
    CHECK(m.per_example[0].f1 == doctest::Approx(1.0));
    CHECK(m.per_example[0].table_recall == doctest::Approx(1.0));

    CHECK(m.per_example[1].precision == doctest::Approx(0.0));
    CHECK(m.per_example[1].recall == doctest::Approx(1.0));
    CHECK(m.per_example[1].f1 == doctest::Approx(0.0));

    CHECK(m.per_example[2].precision == doctest::Approx(0.0));
    CHECK(m.per_example[2].recall == doctest::Approx(0.0));
    CHECK(m.per_example[2].table_recall == doctest::Approx(0.0));
  }

  SUBCASE("ids missing on either side count as empty links") {
    std::map<long long, SchemaLink> gold;
    gold[1] = link_of({{"orders", "id"}});
    std::map<long long, SchemaLink> pred;
    pred[2] = link_of({{"orders", "id"}});

    auto m = ev::link_metrics(pred, gold);
    REQUIRE(m.per_example.size() == 2);
    CHECK(m.per_example[0].question_id == 1);
    CHECK(m.per_example[0].recall == doctest::Approx(0.0));
    CHECK(m.per_example[1].question_id == 2);
    CHECK(m.per_example[1].precision == doctest::Approx(0.0));
    CHECK(m.per_example[1].recall == doctest::Approx(1.0));
  }

  SUBCASE("empty batch") {
    auto m = ev::link_metrics({}, {});
    CHECK(m.per_example.empty());
    CHECK(m.micro_precision == 0.0);
    CHECK(m.macro_f1 == 0.0);
  }
}
