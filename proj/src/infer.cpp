#include "sqlink/infer.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>
#include <tuple>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "sqlink/error.hpp"
#include "sqlink/linkex.hpp"
#include "sqlink/text.hpp"

using nlohmann::json;

namespace sqlink::infer {

const char* backend_kind_name(BackendKind k) {
  switch (k) {
    case BackendKind::http: return "http";
    case BackendKind::fixture: return "fixture";
    case BackendKind::oracle_links: return "oracle_links";
    case BackendKind::replay_gold_sql: return "replay_gold_sql";
  }
  return "fixture";
}

std::optional<BackendKind> backend_kind_from_string(std::string_view s) {
  if (ci_equal(s, "http")) return BackendKind::http;
  if (ci_equal(s, "fixture")) return BackendKind::fixture;
  if (ci_equal(s, "oracle_links")) return BackendKind::oracle_links;
  if (ci_equal(s, "replay_gold_sql")) return BackendKind::replay_gold_sql;
  return std::nullopt;
}

void validate_backend(const BackendConfig& config) {
  if (config.kind == BackendKind::http && config.endpoint_url.empty())
    throw Error(ErrorKind::config, "http backend needs endpoint_url");
  if (config.kind == BackendKind::fixture && config.fixture_path.empty())
    throw Error(ErrorKind::config, "fixture backend needs fixture_path");
  if (config.temperature < 0.0)
    throw Error(ErrorKind::config, "temperature must be >= 0");
  if (config.max_new_tokens <= 0)
    throw Error(ErrorKind::config, "max_new_tokens must be positive");
  if (config.max_retries < 0)
    throw Error(ErrorKind::config, "max_retries must be >= 0");
}

namespace {

Completion base_completion(const prompts::RenderedPrompt& prompt, BackendKind kind) {
  Completion c;
  c.question_id = prompt.question_id;
  c.chunk_index = prompt.chunk_index;
  c.backend_kind = kind;
  c.prompt_hash = fnv1a64_hex(prompt.text);
  return c;
}

class OracleLinksBackend final : public Backend {
 public:
  explicit OracleLinksBackend(std::map<long long, SchemaLink> links)
      : links_(std::move(links)) {}

  Completion complete(const prompts::RenderedPrompt& prompt) override {
    auto it = links_.find(prompt.question_id);
    if (it == links_.end())
      throw Error(ErrorKind::backend,
                  fmt::format("no gold link for question {}", prompt.question_id));
    Completion c = base_completion(prompt, kind());
    if (prompt.chunk_index)
      c.raw_text = linkex::serialize_link(restrict_link(it->second, prompt.chunk_tables));
    else
      c.raw_text = linkex::serialize_link(it->second);
    return c;
  }

  BackendKind kind() const override { return BackendKind::oracle_links; }

 private:
  std::map<long long, SchemaLink> links_;
};

class ReplayGoldSqlBackend final : public Backend {
 public:
  explicit ReplayGoldSqlBackend(std::map<long long, std::string> sql) : sql_(std::move(sql)) {}

  Completion complete(const prompts::RenderedPrompt& prompt) override {
    auto it = sql_.find(prompt.question_id);
    if (it == sql_.end())
      throw Error(ErrorKind::backend,
                  fmt::format("no gold sql for question {}", prompt.question_id));
    Completion c = base_completion(prompt, kind());
    c.raw_text = it->second;
    return c;
  }

  BackendKind kind() const override { return BackendKind::replay_gold_sql; }

 private:
  std::map<long long, std::string> sql_;
};

class FixtureBackend final : public Backend {
 public:
  explicit FixtureBackend(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, fmt::format("cannot read fixture file '{}'", path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw Error(ErrorKind::parse,
                    fmt::format("fixture '{}' line {}: {}", path, lineno, e.what()));
      }
      if (!j.is_object() || !j.contains("question_id") || !j.contains("stage") ||
          !j.contains("raw_text"))
        throw Error(ErrorKind::parse,
                    fmt::format("fixture '{}' line {}: need question_id, stage, raw_text",
                                path, lineno));
      auto stage = stage_from_string(j["stage"].get<std::string>());
      if (!stage)
        throw Error(ErrorKind::parse,
                    fmt::format("fixture '{}' line {}: unknown stage '{}'", path, lineno,
                                j["stage"].get<std::string>()));
      int chunk = -1;
      if (j.contains("chunk_index") && !j["chunk_index"].is_null())
        chunk = j["chunk_index"].get<int>();
      entries_[{j["question_id"].get<long long>(), static_cast<int>(*stage), chunk}] =
          j["raw_text"].get<std::string>();
    }
  }

  Completion complete(const prompts::RenderedPrompt& prompt) override {
    Key key{prompt.question_id, static_cast<int>(prompt.stage),
            prompt.chunk_index ? *prompt.chunk_index : -1};
    auto it = entries_.find(key);
    if (it == entries_.end())
      throw Error(ErrorKind::backend,
                  fmt::format("no fixture completion for question {} stage {} chunk {}",
                              prompt.question_id, stage_name(prompt.stage),
                              prompt.chunk_index ? std::to_string(*prompt.chunk_index)
                                                 : "none"));
    Completion c = base_completion(prompt, kind());
    c.raw_text = it->second;
    return c;
  }

  BackendKind kind() const override { return BackendKind::fixture; }

 private:
  using Key = std::tuple<long long, int, int>;
  std::map<Key, std::string> entries_;
};

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig config) : config_(std::move(config)) {
    auto scheme_end = config_.endpoint_url.find("://");
    if (scheme_end == std::string::npos)
      throw Error(ErrorKind::config,
                  fmt::format("endpoint_url '{}' needs a scheme", config_.endpoint_url));
    auto path_start = config_.endpoint_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      base_ = config_.endpoint_url;
      path_ = "/";
    } else {
      base_ = config_.endpoint_url.substr(0, path_start);
      path_ = config_.endpoint_url.substr(path_start);
    }
    if (!config_.api_key_env.empty()) {
      if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    }
  }

  Completion complete(const prompts::RenderedPrompt& prompt) override {
    json body{{"model", config_.model_name},
              {"prompt", prompt.text},
              {"max_tokens", config_.max_new_tokens},
              {"temperature", config_.temperature}};
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        int delay_ms = std::min(200 * (1 << (attempt - 1)), 5000);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      }

      httplib::Client client(base_);
      client.set_connection_timeout(0, 1000 * static_cast<time_t>(config_.request_timeout_ms));
      client.set_read_timeout(config_.request_timeout_ms / 1000,
                              (config_.request_timeout_ms % 1000) * 1000);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

      auto start = std::chrono::steady_clock::now();
      auto res = client.Post(path_, headers, payload, "application/json");
      auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();

      if (!res) {
        last_error = fmt::format("connection failed ({})", httplib::to_string(res.error()));
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = fmt::format("http {}", res->status);
        continue;
      }
      if (res->status != 200)
        throw Error(ErrorKind::backend,
                    fmt::format("question {}: http {} from '{}'", prompt.question_id,
                                res->status, config_.endpoint_url));

      json parsed;
      try {
        parsed = json::parse(res->body);
      } catch (const json::exception&) {
        throw Error(ErrorKind::backend,
                    fmt::format("question {}: endpoint returned non-JSON body",
                                prompt.question_id));
      }
      if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
          parsed["choices"].empty() || !parsed["choices"][0].contains("text"))
        throw Error(ErrorKind::backend,
                    fmt::format("question {}: response has no choices[0].text",
                                prompt.question_id));

      Completion c = base_completion(prompt, kind());
      c.raw_text = parsed["choices"][0]["text"].get<std::string>();
      c.latency_ms = elapsed;
      return c;
    }
    throw Error(ErrorKind::backend,
                fmt::format("question {}: gave up after {} attempts: {}", prompt.question_id,
                            config_.max_retries + 1, last_error));
  }

  BackendKind kind() const override { return BackendKind::http; }

 private:
  BackendConfig config_;
  std::string base_;
  std::string path_;
  std::string api_key_;
};

}  // namespace

std::unique_ptr<Backend> make_backend(const BackendConfig& config, BackendContext context) {
  validate_backend(config);
  switch (config.kind) {
    case BackendKind::http: return std::make_unique<HttpBackend>(config);
    case BackendKind::fixture: return std::make_unique<FixtureBackend>(config.fixture_path);
    case BackendKind::oracle_links:
      return std::make_unique<OracleLinksBackend>(std::move(context.gold_links));
    case BackendKind::replay_gold_sql:
      return std::make_unique<ReplayGoldSqlBackend>(std::move(context.gold_sql));
  }
  throw Error(ErrorKind::config, "unknown backend kind");
}

std::vector<Completion> run_stage(Backend& backend,
                                  const std::vector<prompts::RenderedPrompt>& prompts,
                                  int parallelism) {
  if (parallelism < 1) throw Error(ErrorKind::config, "parallelism must be >= 1");
  std::vector<Completion> out(prompts.size());
  if (prompts.empty()) return out;

  std::atomic<std::size_t> next{0};
  std::mutex abort_mu;
  std::exception_ptr abort;

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= prompts.size()) return;
      {
        std::lock_guard<std::mutex> lock(abort_mu);
        if (abort) return;
      }
      try {
        out[i] = backend.complete(prompts[i]);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::config) {
          std::lock_guard<std::mutex> lock(abort_mu);
          if (!abort) abort = std::current_exception();
          return;
        }
        out[i] = base_completion(prompts[i], backend.kind());
        out[i].ok = false;
        out[i].error = e.what();
      } catch (const std::exception& e) {
        out[i] = base_completion(prompts[i], backend.kind());
        out[i].ok = false;
        out[i].error = e.what();
      }
    }
  };

  std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(parallelism), prompts.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  if (abort) std::rethrow_exception(abort);
  return out;
}

}  // namespace sqlink::infer
