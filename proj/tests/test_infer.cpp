#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "sqlink/error.hpp"
#include "sqlink/infer.hpp"
#include "sqlink/linkex.hpp"
#include "sqlink/prompts.hpp"
#include "sqlink/text.hpp"
#include "sqlink/types.hpp"
#include "support.hpp"

using namespace sqlink;
namespace inf = sqlink::infer;
using nlohmann::json;

namespace {

prompts::RenderedPrompt make_prompt(long long qid, Stage stage, std::string text,
                                    std::optional<int> chunk = std::nullopt,
                                    std::vector<std::string> chunk_tables = {}) {
  prompts::RenderedPrompt p;
  p.question_id = qid;
  p.stage = stage;
  p.text = std::move(text);
  p.chunk_index = chunk;
  p.chunk_tables = std::move(chunk_tables);
  return p;
}

// Server whose response script is consumed one entry per request; the final
// entry repeats. Records every request body and header set it sees.
class ScriptedServer {
 public:
  struct Step {
    int status = 200;
    std::string body;
  };

  explicit ScriptedServer(std::vector<Step> script) : script_(std::move(script)) {
    server_.Post("/v1/completions", [this](const httplib::Request& req,
                                           httplib::Response& res) {
      std::lock_guard<std::mutex> lock(mu_);
      requests_.push_back(req);
      const Step& step =
          script_[std::min(requests_.size() - 1, script_.size() - 1)];
      res.status = step.status;
      res.set_content(step.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~ScriptedServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const {
    return fmt::format("http://127.0.0.1:{}/v1/completions", port_);
  }

  std::size_t request_count() {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_.size();
  }

  httplib::Request request(std::size_t i) {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_.at(i);
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::vector<httplib::Request> requests_;
  std::vector<Step> script_;
};

std::string ok_body(const std::string& text) {
  json j{{"choices", json::array({json{{"text", text}}})}};
  return j.dump();
}

}  // namespace

TEST_CASE("backend kind names") {
  for (auto kind : {inf::BackendKind::http, inf::BackendKind::fixture,
                    inf::BackendKind::oracle_links, inf::BackendKind::replay_gold_sql}) {
    auto parsed = inf::backend_kind_from_string(inf::backend_kind_name(kind));
    REQUIRE(parsed.has_value());
    CHECK(*parsed == kind);
  }
  CHECK_FALSE(inf::backend_kind_from_string("grpc").has_value());
  CHECK(inf::backend_kind_from_string("HTTP") == inf::BackendKind::http);
}

TEST_CASE("backend validation") {
  inf::BackendConfig config;

  SUBCASE("http needs a url") {
    config.kind = inf::BackendKind::http;
    CHECK_THROWS_WITH_AS(inf::validate_backend(config), "http backend needs endpoint_url",
                         Error);
  }

  SUBCASE("fixture needs a path") {
    config.kind = inf::BackendKind::fixture;
    CHECK_THROWS_WITH_AS(inf::validate_backend(config), "fixture backend needs fixture_path",
                         Error);
    CHECK_THROWS_AS(inf::make_backend(config), Error);
  }

  SUBCASE("parameter ranges") {
    config.kind = inf::BackendKind::oracle_links;
    config.temperature = -0.1;
    CHECK_THROWS_WITH_AS(inf::validate_backend(config), "temperature must be >= 0", Error);
    config.temperature = 0.0;
    config.max_new_tokens = 0;
    CHECK_THROWS_WITH_AS(inf::validate_backend(config), "max_new_tokens must be positive",
                         Error);
    config.max_new_tokens = 16;
    config.max_retries = -1;
    CHECK_THROWS_WITH_AS(inf::validate_backend(config), "max_retries must be >= 0", Error);
  }
}

TEST_CASE("fixture backend") {
  testsup::TempDir dir;
  auto fixture_path = (dir / "completions.jsonl").string();

  SUBCASE("answers by question, stage and chunk") {
    testsup::write_file(
        fixture_path,
        R"x({"question_id": 1, "stage": "link", "raw_text": "schools(CDSCode)"})x"
        "\n"
        "\n"  // blank lines are skipped
        R"x({"question_id": 1, "stage": "sql", "raw_text": "SELECT 1"})x"
        "\n"
        R"x({"question_id": 2, "stage": "link", "chunk_index": 0, "raw_text": "None"})x"
        "\n"
        R"x({"question_id": 2, "stage": "link", "chunk_index": 1, "raw_text": "frpm(CDSCode)"})x"
        "\n");
    inf::BackendConfig config;
    config.kind = inf::BackendKind::fixture;
    config.fixture_path = fixture_path;
    auto backend = inf::make_backend(config);

    auto c = backend->complete(make_prompt(1, Stage::link, "prompt one"));
    CHECK(c.ok);
    CHECK(c.raw_text == "schools(CDSCode)");
    CHECK(c.latency_ms == 0);
    CHECK(c.backend_kind == inf::BackendKind::fixture);
    CHECK(c.prompt_hash == fnv1a64_hex("prompt one"));
    CHECK_FALSE(c.chunk_index.has_value());

    CHECK(backend->complete(make_prompt(1, Stage::sql, "p")).raw_text == "SELECT 1");
    auto chunked = backend->complete(make_prompt(2, Stage::link, "p", 1));
    CHECK(chunked.raw_text == "frpm(CDSCode)");
    CHECK(chunked.chunk_index == 1);

    // Misses carry the full lookup key.
    CHECK_THROWS_WITH_AS(backend->complete(make_prompt(2, Stage::link, "p")),
                         "no fixture completion for question 2 stage link chunk none",
                         Error);
    CHECK_THROWS_WITH_AS(backend->complete(make_prompt(1, Stage::link, "p", 3)),
                         "no fixture completion for question 1 stage link chunk 3", Error);
    CHECK_THROWS_WITH_AS(backend->complete(make_prompt(9, Stage::sql, "p")),
                         "no fixture completion for question 9 stage sql chunk none", Error);
  }

  SUBCASE("missing file") {
    inf::BackendConfig config;
    config.kind = inf::BackendKind::fixture;
    config.fixture_path = (dir / "absent.jsonl").string();
    CHECK_THROWS_WITH_AS(
        inf::make_backend(config),
        fmt::format("cannot read fixture file '{}'", config.fixture_path).c_str(), Error);
  }

  SUBCASE("record without required keys") {
    testsup::write_file(fixture_path, R"({"question_id": 1, "stage": "link"})"
                                      "\n");
    inf::BackendConfig config;
    config.kind = inf::BackendKind::fixture;
    config.fixture_path = fixture_path;
    CHECK_THROWS_WITH_AS(
        inf::make_backend(config),
        fmt::format("fixture '{}' line 1: need question_id, stage, raw_text", fixture_path)
            .c_str(),
        Error);
  }

  SUBCASE("unknown stage") {
    testsup::write_file(fixture_path,
                        R"({"question_id": 1, "stage": "prep", "raw_text": "x"})"
                        "\n");
    inf::BackendConfig config;
    config.kind = inf::BackendKind::fixture;
    config.fixture_path = fixture_path;
    CHECK_THROWS_WITH_AS(
        inf::make_backend(config),
        fmt::format("fixture '{}' line 1: unknown stage 'prep'", fixture_path).c_str(),
        Error);
  }

  SUBCASE("broken json names the line") {
    testsup::write_file(fixture_path, "{\"question_id\": 1,\n");
    inf::BackendConfig config;
    config.kind = inf::BackendKind::fixture;
    config.fixture_path = fixture_path;
    try {
      inf::make_backend(config);
      FAIL("expected a parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::parse);
      CHECK(std::string(e.what()).find("line 1:") != std::string::npos);
    }
  }
}

TEST_CASE("oracle links backend") {
  SchemaLink gold;
  gold.add(ColumnRef{"schools", "CDSCode"});
  gold.add(ColumnRef{"frpm", "CDSCode"});
  gold.add(ForeignKey{"frpm", "CDSCode", "schools", "CDSCode"});

  inf::BackendContext context;
  context.gold_links[7] = gold;
  inf::BackendConfig config;
  config.kind = inf::BackendKind::oracle_links;
  auto backend = inf::make_backend(config, context);

  SUBCASE("unchunked prompts get the whole link") {
    auto c = backend->complete(make_prompt(7, Stage::link, "p"));
    CHECK(c.raw_text == linkex::serialize_link(gold));
    CHECK(c.latency_ms == 0);
    CHECK(c.backend_kind == inf::BackendKind::oracle_links);
  }

  SUBCASE("chunked prompts get the restriction") {
    auto c = backend->complete(make_prompt(7, Stage::link, "p", 0, {"frpm"}));
    CHECK(c.raw_text == "frpm(CDSCode)");
    auto none = backend->complete(make_prompt(7, Stage::link, "p", 1, {"satscores"}));
    CHECK(none.raw_text == "None");
  }

  SUBCASE("missing gold link") {
    CHECK_THROWS_WITH_AS(backend->complete(make_prompt(8, Stage::link, "p")),
                         "no gold link for question 8", Error);
  }
}

TEST_CASE("replay gold sql backend") {
  inf::BackendContext context;
  context.gold_sql[3] = "SELECT Charter FROM schools";
  inf::BackendConfig config;
  config.kind = inf::BackendKind::replay_gold_sql;
  auto backend = inf::make_backend(config, context);

  auto c = backend->complete(make_prompt(3, Stage::sql, "p"));
  CHECK(c.raw_text == "SELECT Charter FROM schools");
  CHECK(c.latency_ms == 0);
  CHECK(c.backend_kind == inf::BackendKind::replay_gold_sql);
  CHECK_THROWS_WITH_AS(backend->complete(make_prompt(4, Stage::sql, "p")),
                       "no gold sql for question 4", Error);
}

TEST_CASE("run_stage") {
  inf::BackendContext context;
  context.gold_sql[1] = "SELECT 1";
  context.gold_sql[2] = "SELECT 2";
  context.gold_sql[4] = "SELECT 4";
  inf::BackendConfig config;
  config.kind = inf::BackendKind::replay_gold_sql;
  auto backend = inf::make_backend(config, context);

  std::vector<prompts::RenderedPrompt> batch;
  for (long long qid : {1, 2, 3, 4})
    batch.push_back(make_prompt(qid, Stage::sql, fmt::format("prompt {}", qid)));

  SUBCASE("order survives, failures become completions") {
    auto out = inf::run_stage(*backend, batch, 2);
    REQUIRE(out.size() == 4);
    CHECK(out[0].raw_text == "SELECT 1");
    CHECK(out[1].raw_text == "SELECT 2");
    CHECK_FALSE(out[2].ok);
    CHECK(out[2].error == "no gold sql for question 3");
    CHECK(out[2].question_id == 3);
    CHECK(out[2].prompt_hash == fnv1a64_hex("prompt 3"));
    CHECK(out[3].raw_text == "SELECT 4");
  }

  SUBCASE("parallelism never changes the result") {
    auto serial = inf::run_stage(*backend, batch, 1);
    auto wide = inf::run_stage(*backend, batch, 8);
    REQUIRE(serial.size() == wide.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
      CHECK(serial[i].question_id == wide[i].question_id);
      CHECK(serial[i].raw_text == wide[i].raw_text);
      CHECK(serial[i].ok == wide[i].ok);
      CHECK(serial[i].error == wide[i].error);
    }
  }

  SUBCASE("empty batch") { CHECK(inf::run_stage(*backend, {}, 4).empty()); }

  SUBCASE("parallelism must be positive") {
    CHECK_THROWS_WITH_AS(inf::run_stage(*backend, batch, 0), "parallelism must be >= 1",
                         Error);
  }

  SUBCASE("config errors abort the whole stage") {
    struct MisconfiguredBackend : inf::Backend {
      inf::Completion complete(const prompts::RenderedPrompt&) override {
        throw Error(ErrorKind::config, "backend configured wrong");
      }
      inf::BackendKind kind() const override { return inf::BackendKind::fixture; }
    } bad;
    CHECK_THROWS_WITH_AS(inf::run_stage(bad, batch, 2), "backend configured wrong", Error);
  }

  SUBCASE("unexpected exceptions become failed completions") {
    struct ThrowingBackend : inf::Backend {
      inf::Completion complete(const prompts::RenderedPrompt&) override {
        throw std::runtime_error("wire fell out");
      }
      inf::BackendKind kind() const override { return inf::BackendKind::fixture; }
    } flaky;
    auto out = inf::run_stage(flaky, batch, 2);
    REQUIRE(out.size() == 4);
    for (const auto& c : out) {
      CHECK_FALSE(c.ok);
      CHECK(c.error == "wire fell out");
    }
  }
}

TEST_CASE("http backend") {
  SUBCASE("url needs a scheme") {
    inf::BackendConfig config;
    config.kind = inf::BackendKind::http;
    config.endpoint_url = "localhost:8000/v1/completions";
    CHECK_THROWS_WITH_AS(inf::make_backend(config),
                         "endpoint_url 'localhost:8000/v1/completions' needs a scheme",
                         Error);
  }

  SUBCASE("posts the prompt and reads choices[0].text") {
    ScriptedServer server({{200, ok_body("SELECT 42")}});
    ::setenv("SQLINK_TEST_KEY", "sek-12345", 1);

    inf::BackendConfig config;
    config.kind = inf::BackendKind::http;
    config.endpoint_url = server.url();
    config.model_name = "tiny-model";
    config.max_new_tokens = 77;
    config.temperature = 0.25;
    config.api_key_env = "SQLINK_TEST_KEY";
    auto backend = inf::make_backend(config);

    auto c = backend->complete(make_prompt(5, Stage::sql, "the prompt text"));
    CHECK(c.ok);
    CHECK(c.raw_text == "SELECT 42");
    CHECK(c.backend_kind == inf::BackendKind::http);
    CHECK(c.prompt_hash == fnv1a64_hex("the prompt text"));
    CHECK(c.latency_ms >= 0);

    REQUIRE(server.request_count() == 1);
    auto req = server.request(0);
    CHECK(req.path == "/v1/completions");
    CHECK(req.get_header_value("Content-Type") == "application/json");
    CHECK(req.get_header_value("Authorization") == "Bearer sek-12345");
    auto body = json::parse(req.body);
    CHECK(body.at("model") == "tiny-model");
    CHECK(body.at("prompt") == "the prompt text");
    CHECK(body.at("max_tokens") == 77);
    CHECK(body.at("temperature") == 0.25);
    ::unsetenv("SQLINK_TEST_KEY");
  }

  SUBCASE("no key in the environment means no auth header") {
    ScriptedServer server({{200, ok_body("x")}});
    ::unsetenv("SQLINK_ABSENT_KEY");
    inf::BackendConfig config;
    config.kind = inf::BackendKind::http;
    config.endpoint_url = server.url();
    config.api_key_env = "SQLINK_ABSENT_KEY";
    auto backend = inf::make_backend(config);
    backend->complete(make_prompt(1, Stage::sql, "p"));
    CHECK_FALSE(server.request(0).has_header("Authorization"));
  }

  SUBCASE("retries server errors until one succeeds") {
    ScriptedServer server({{500, "oops"}, {503, "oops"}, {200, ok_body("recovered")}});
    inf::BackendConfig config;
    config.kind = inf::BackendKind::http;
    config.endpoint_url = server.url();
    config.max_retries = 3;
    auto backend = inf::make_backend(config);

    auto c = backend->complete(make_prompt(6, Stage::sql, "p"));
    CHECK(c.raw_text == "recovered");
    CHECK(server.request_count() == 3);
  }

  SUBCASE("gives up after max_retries + 1 attempts") {
    ScriptedServer server({{500, "oops"}});
    inf::BackendConfig config;
    config.kind = inf::BackendKind::http;
    config.endpoint_url = server.url();
    config.max_retries = 1;
    auto backend = inf::make_backend(config);

    CHECK_THROWS_WITH_AS(backend->complete(make_prompt(9, Stage::sql, "p")),
                         "question 9: gave up after 2 attempts: http 500", Error);
    CHECK(server.request_count() == 2);
  }

  SUBCASE("429 counts as retryable") {
    ScriptedServer server({{429, "slow down"}, {200, ok_body("fine")}});
    inf::BackendConfig config;
    config.kind = inf::BackendKind::http;
    config.endpoint_url = server.url();
    auto backend = inf::make_backend(config);
    CHECK(backend->complete(make_prompt(1, Stage::sql, "p")).raw_text == "fine");
    CHECK(server.request_count() == 2);
  }

  SUBCASE("client errors fail immediately") {
    ScriptedServer server({{404, "not here"}});
    inf::BackendConfig config;
    config.kind = inf::BackendKind::http;
    config.endpoint_url = server.url();
    config.max_retries = 5;
    auto backend = inf::make_backend(config);

    CHECK_THROWS_WITH_AS(
        backend->complete(make_prompt(9, Stage::sql, "p")),
        fmt::format("question 9: http 404 from '{}'", server.url()).c_str(), Error);
    CHECK(server.request_count() == 1);
  }

  SUBCASE("non-json body") {
    ScriptedServer server({{200, "<html>hi</html>"}});
    inf::BackendConfig config;
    config.kind = inf::BackendKind::http;
    config.endpoint_url = server.url();
    auto backend = inf::make_backend(config);
    CHECK_THROWS_WITH_AS(backend->complete(make_prompt(2, Stage::sql, "p")),
                         "question 2: endpoint returned non-JSON body", Error);
  }

  SUBCASE("missing completion text") {
    ScriptedServer server({{200, R"({"choices": []})"}});
    inf::BackendConfig config;
    config.kind = inf::BackendKind::http;
    config.endpoint_url = server.url();
    auto backend = inf::make_backend(config);
    CHECK_THROWS_WITH_AS(backend->complete(make_prompt(2, Stage::sql, "p")),
                         "question 2: response has no choices[0].text", Error);
  }

  SUBCASE("connection failures are retried then reported") {
    inf::BackendConfig config;
    config.kind = inf::BackendKind::http;
    config.endpoint_url = "http://127.0.0.1:9/v1/completions";  // discard port, nothing listens
    config.max_retries = 0;
    config.request_timeout_ms = 1000;
    auto backend = inf::make_backend(config);
    try {
      backend->complete(make_prompt(3, Stage::sql, "p"));
      FAIL("expected a backend error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::backend);
      CHECK(std::string(e.what()).find("question 3: gave up after 1 attempts: connection "
                                       "failed") != std::string::npos);
    }
  }

  SUBCASE("failures inside run_stage do not abort the batch") {
    ScriptedServer server({{200, ok_body("one")}, {404, "gone"}, {200, ok_body("three")}});
    inf::BackendConfig config;
    config.kind = inf::BackendKind::http;
    config.endpoint_url = server.url();
    auto backend = inf::make_backend(config);

    std::vector<prompts::RenderedPrompt> batch;
    for (long long qid : {1, 2, 3})
      batch.push_back(make_prompt(qid, Stage::sql, fmt::format("p{}", qid)));
    auto out = inf::run_stage(*backend, batch, 1);
    REQUIRE(out.size() == 3);
    CHECK(out[0].raw_text == "one");
    CHECK_FALSE(out[1].ok);
    CHECK(out[1].error == fmt::format("question 2: http 404 from '{}'", server.url()));
    CHECK(out[2].raw_text == "three");
  }
}
