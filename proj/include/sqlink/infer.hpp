#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sqlink/prompts.hpp"
#include "sqlink/types.hpp"

namespace sqlink::infer {

enum class BackendKind { http, fixture, oracle_links, replay_gold_sql };

const char* backend_kind_name(BackendKind k);
std::optional<BackendKind> backend_kind_from_string(std::string_view s);

struct BackendConfig {
  BackendKind kind = BackendKind::fixture;
  std::string endpoint_url;  // full URL including path, http kind only
  std::string model_name;
  std::string fixture_path;  // fixture kind only
  // Name of the environment variable holding the bearer token; unset or
  // empty variable means unauthenticated requests.
  std::string api_key_env = "SQLINK_API_KEY";
  int max_new_tokens = 512;
  double temperature = 0.0;
  int request_timeout_ms = 60000;
  int max_retries = 3;
};

// Config errors (missing endpoint, negative temperature, bad fixture path).
void validate_backend(const BackendConfig& config);

struct Completion {
  long long question_id = 0;
  std::optional<int> chunk_index;
  std::string raw_text;
  // Wall time of the winning request; pure backends report 0 so reruns are
  // byte-identical.
  long long latency_ms = 0;
  BackendKind backend_kind = BackendKind::fixture;
  bool ok = true;
  std::string error;
  std::string prompt_hash;
};

// Material the pure backends answer from.
struct BackendContext {
  std::map<long long, SchemaLink> gold_links;   // oracle_links
  std::map<long long, std::string> gold_sql;    // replay_gold_sql
};

class Backend {
 public:
  virtual ~Backend() = default;
  // Throws Error(backend) on failure; batch drivers turn that into a failed
  // Completion instead of aborting.
  virtual Completion complete(const prompts::RenderedPrompt& prompt) = 0;
  virtual BackendKind kind() const = 0;
};

// fixture loads its file eagerly; oracle_links serializes the gold link
// restricted to the prompt's chunk tables (full link for unchunked prompts);
// replay_gold_sql echoes the example's gold SQL.
std::unique_ptr<Backend> make_backend(const BackendConfig& config, BackendContext context = {});

// Up to `parallelism` prompts in flight; output order matches input order.
// Per-prompt failures become Completions with ok=false; only config errors
// abort.
std::vector<Completion> run_stage(Backend& backend,
                                  const std::vector<prompts::RenderedPrompt>& prompts,
                                  int parallelism);

}  // namespace sqlink::infer
