#include "sqlink/config.hpp"

#include <cstdlib>
#include <filesystem>

#include <fmt/format.h>

#include "sqlink/artifacts.hpp"
#include "sqlink/error.hpp"

namespace fs = std::filesystem;

namespace sqlink::config {

namespace {

void interpolate_string(std::string& s) {
  std::size_t pos = 0;
  while ((pos = s.find("${", pos)) != std::string::npos) {
    auto close = s.find('}', pos + 2);
    if (close == std::string::npos) break;
    std::string name = s.substr(pos + 2, close - pos - 2);
    const char* value = std::getenv(name.c_str());
    if (!value)
      throw Error(ErrorKind::config,
                  fmt::format("environment variable '{}' is not set", name));
    s.replace(pos, close - pos + 1, value);
    pos += std::strlen(value);
  }
}

void interpolate_node(ordered_json& j) {
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    interpolate_string(s);
    j = s;
  } else if (j.is_object() || j.is_array()) {
    for (auto& child : j) interpolate_node(child);
  }
}

}  // namespace

void interpolate_env(ordered_json& j) { interpolate_node(j); }

namespace {

chunker::TokenBudget budget_from_json(const ordered_json& j, const char* key) {
  chunker::TokenBudget budget;
  if (j.is_number_integer()) {
    budget.max_tokens = j.get<int>();
    return budget;
  }
  if (!j.is_object())
    throw Error(ErrorKind::config,
                fmt::format("'{}' must be a token count or an object", key));
  for (const auto& [k, v] : j.items()) {
    if (k == "max_tokens") {
      budget.max_tokens = v.get<int>();
    } else if (k == "tokenizer") {
      auto name = v.get<std::string>();
      if (ci_equal(name, "heuristic"))
        budget.tokenizer = chunker::TokenizerId::heuristic;
      else if (ci_equal(name, "external"))
        budget.tokenizer = chunker::TokenizerId::external;
      else
        throw Error(ErrorKind::config, fmt::format("unknown tokenizer '{}'", name));
    } else if (k == "external_command") {
      budget.external_command = v.get<std::string>();
    } else {
      throw Error(ErrorKind::config, fmt::format("unknown key '{}' in '{}'", k, key));
    }
  }
  return budget;
}

ordered_json budget_to_json(const chunker::TokenBudget& budget) {
  ordered_json j;
  j["max_tokens"] = budget.max_tokens;
  j["tokenizer"] =
      budget.tokenizer == chunker::TokenizerId::external ? "external" : "heuristic";
  j["external_command"] = budget.external_command;
  return j;
}

infer::BackendConfig backend_from_json(const ordered_json& j, const char* key) {
  if (!j.is_object())
    throw Error(ErrorKind::config, fmt::format("'{}' must be an object", key));
  infer::BackendConfig backend;
  for (const auto& [k, v] : j.items()) {
    if (k == "kind") {
      auto kind = infer::backend_kind_from_string(v.get<std::string>());
      if (!kind)
        throw Error(ErrorKind::config,
                    fmt::format("unknown backend kind '{}'", v.get<std::string>()));
      backend.kind = *kind;
    } else if (k == "endpoint_url") {
      backend.endpoint_url = v.get<std::string>();
    } else if (k == "model_name") {
      backend.model_name = v.get<std::string>();
    } else if (k == "fixture_path") {
      backend.fixture_path = v.get<std::string>();
    } else if (k == "api_key_env") {
      backend.api_key_env = v.get<std::string>();
    } else if (k == "max_new_tokens") {
      backend.max_new_tokens = v.get<int>();
    } else if (k == "temperature") {
      backend.temperature = v.get<double>();
    } else if (k == "request_timeout_ms") {
      backend.request_timeout_ms = v.get<int>();
    } else if (k == "max_retries") {
      backend.max_retries = v.get<int>();
    } else {
      throw Error(ErrorKind::config, fmt::format("unknown key '{}' in '{}'", k, key));
    }
  }
  return backend;
}

ordered_json backend_to_json(const infer::BackendConfig& backend) {
  ordered_json j;
  j["kind"] = infer::backend_kind_name(backend.kind);
  j["endpoint_url"] = backend.endpoint_url;
  j["model_name"] = backend.model_name;
  j["fixture_path"] = backend.fixture_path;
  j["api_key_env"] = backend.api_key_env;
  j["max_new_tokens"] = backend.max_new_tokens;
  j["temperature"] = backend.temperature;
  j["request_timeout_ms"] = backend.request_timeout_ms;
  j["max_retries"] = backend.max_retries;
  return j;
}

prompts::PipelineVariant variant_from_json(const ordered_json& j) {
  if (j.is_string()) {
    auto v = prompts::variant_from_string(j.get<std::string>());
    if (!v)
      throw Error(ErrorKind::config,
                  fmt::format("unknown variant '{}'", j.get<std::string>()));
    return *v;
  }
  if (!j.is_object() || !j.contains("link_mode") || !j.contains("sql_mode"))
    throw Error(ErrorKind::config,
                "variant must be \"link_mode+sql_mode\" or {link_mode, sql_mode}");
  auto link = prompts::link_mode_from_string(j.at("link_mode").get<std::string>());
  auto sql = prompts::sql_mode_from_string(j.at("sql_mode").get<std::string>());
  if (!link || !sql) throw Error(ErrorKind::config, "unknown link_mode or sql_mode");
  return prompts::PipelineVariant{*link, *sql};
}

struct InstructionSlot {
  const char* key;
  prompts::Template prompts::TemplateSet::* member;
};

const InstructionSlot kInstructionSlots[6] = {
    {"link_nd", &prompts::TemplateSet::link_nd},
    {"link_chunked", &prompts::TemplateSet::link_chunked},
    {"sql_direct", &prompts::TemplateSet::sql_direct},
    {"sql_trusting", &prompts::TemplateSet::sql_trusting},
    {"sql_non_trusting", &prompts::TemplateSet::sql_non_trusting},
    {"sql_non_trusting_link_only", &prompts::TemplateSet::sql_non_trusting_link_only},
};

}  // namespace

const infer::BackendConfig& RunConfig::backend_for(Stage stage) const {
  if (stage == Stage::link && link_backend) return *link_backend;
  if (stage == Stage::sql && sql_backend) return *sql_backend;
  return backend;
}

prompts::TemplateSet RunConfig::templates() const {
  if (!templates_dir.empty()) return prompts::load_templates(templates_dir, instructions);
  prompts::TemplateSet t = prompts::TemplateSet::defaults();
  for (const auto& slot : kInstructionSlots) {
    auto it = instructions.find(slot.key);
    if (it != instructions.end()) (t.*slot.member).instruction = it->second;
  }
  return t;
}

RunConfig config_from_json(const ordered_json& j) {
  if (!j.is_object()) throw Error(ErrorKind::config, "config must be a JSON object");
  RunConfig c;
  bool link_budget_set = false;
  ordered_json frozen_hashes;

  for (const auto& [key, value] : j.items()) {
    if (key == "questions") {
      c.questions_path = value.get<std::string>();
    } else if (key == "databases") {
      c.databases_dir = value.get<std::string>();
    } else if (key == "with_descriptions") {
      c.with_descriptions = value.get<bool>();
    } else if (key == "gold_links") {
      c.gold_links_path = value.get<std::string>();
    } else if (key == "predicted_links") {
      c.predicted_links_path = value.get<std::string>();
    } else if (key == "variant") {
      c.variant = variant_from_json(value);
    } else if (key == "link_budget") {
      c.link_budget = budget_from_json(value, "link_budget");
      link_budget_set = true;
    } else if (key == "sql_budget") {
      c.sql_budget = budget_from_json(value, "sql_budget");
    } else if (key == "backend") {
      c.backend = backend_from_json(value, "backend");
    } else if (key == "link_backend") {
      c.link_backend = backend_from_json(value, "link_backend");
    } else if (key == "sql_backend") {
      c.sql_backend = backend_from_json(value, "sql_backend");
    } else if (key == "templates_dir") {
      c.templates_dir = value.get<std::string>();
    } else if (key == "instructions") {
      for (const auto& [name, text] : value.items())
        c.instructions[name] = text.get<std::string>();
    } else if (key == "parallelism") {
      c.parallelism = value.get<int>();
    } else if (key == "timeout_ms") {
      c.timeout_ms = value.get<int>();
    } else if (key == "out_dir") {
      c.out_dir = value.get<std::string>();
    } else if (key == "seed") {
      c.seed = value.get<std::uint64_t>();
    } else if (key == "model_label") {
      c.model_label = value.get<std::string>();
    } else if (key == "limit") {
      c.limit = value.get<int>();
    } else if (key == "train_fraction") {
      c.train_fraction = value.get<double>();
    } else if (key == "sft_stage") {
      auto stage = stage_from_string(value.get<std::string>());
      if (!stage)
        throw Error(ErrorKind::config,
                    fmt::format("unknown sft_stage '{}'", value.get<std::string>()));
      c.sft_stage = *stage;
    } else if (key == "template_hashes") {
      frozen_hashes = value;  // verified below, present in frozen copies
    } else {
      throw Error(ErrorKind::config, fmt::format("unknown config key '{}'", key));
    }
  }

  if (!link_budget_set)
    c.link_budget.max_tokens = c.variant.link_mode == prompts::LinkMode::chunked
                                   ? chunker::kDefaultChunkBudgetTokens
                                   : chunker::kDefaultNdBudgetTokens;

  if (!frozen_hashes.is_null() && frozen_hashes.is_object()) {
    prompts::TemplateSet t = c.templates();
    for (const auto& slot : kInstructionSlots) {
      if (!frozen_hashes.contains(slot.key)) continue;
      auto frozen = frozen_hashes.at(slot.key).get<std::string>();
      auto current = (t.*slot.member).hash();
      if (frozen != current)
        throw Error(ErrorKind::config,
                    fmt::format("template '{}' changed since this config was frozen "
                                "(hash {} != {})",
                                slot.key, current, frozen));
    }
  }
  return c;
}

RunConfig load_config(const std::string& path, const ordered_json& overrides) {
  ordered_json j;
  try {
    j = ordered_json::parse(artifacts::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, fmt::format("config '{}': {}", path, e.what()));
  }
  if (!j.is_object())
    throw Error(ErrorKind::config, fmt::format("config '{}' must be a JSON object", path));

  if (overrides.is_object()) {
    for (const auto& [key, value] : overrides.items()) {
      j[key] = value;
      if (key == "backend") {
        j.erase("link_backend");
        j.erase("sql_backend");
      }
    }
  }

  interpolate_env(j);
  RunConfig c = config_from_json(j);
  validate_config(c);
  return c;
}

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["questions"] = c.questions_path;
  j["databases"] = c.databases_dir;
  j["with_descriptions"] = c.with_descriptions;
  if (!c.gold_links_path.empty()) j["gold_links"] = c.gold_links_path;
  if (!c.predicted_links_path.empty()) j["predicted_links"] = c.predicted_links_path;
  j["variant"] = prompts::variant_name(c.variant);
  j["link_budget"] = budget_to_json(c.link_budget);
  j["sql_budget"] = budget_to_json(c.sql_budget);
  j["backend"] = backend_to_json(c.backend);
  if (c.link_backend) j["link_backend"] = backend_to_json(*c.link_backend);
  if (c.sql_backend) j["sql_backend"] = backend_to_json(*c.sql_backend);
  if (!c.templates_dir.empty()) j["templates_dir"] = c.templates_dir;
  if (!c.instructions.empty()) {
    ordered_json inst;
    for (const auto& [k, v] : c.instructions) inst[k] = v;
    j["instructions"] = inst;
  }
  j["parallelism"] = c.parallelism;
  j["timeout_ms"] = c.timeout_ms;
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  j["model_label"] = c.model_label;
  j["limit"] = c.limit;
  j["train_fraction"] = c.train_fraction;
  j["sft_stage"] = stage_name(c.sft_stage);

  prompts::TemplateSet t = c.templates();
  ordered_json hashes;
  for (const auto& slot : kInstructionSlots) hashes[slot.key] = (t.*slot.member).hash();
  j["template_hashes"] = hashes;
  return j;
}

void validate_config(const RunConfig& c) {
  if (c.questions_path.empty())
    throw Error(ErrorKind::config, "config needs a 'questions' path");
  if (!fs::exists(c.questions_path))
    throw Error(ErrorKind::config,
                fmt::format("questions file '{}' does not exist", c.questions_path));
  if (c.databases_dir.empty())
    throw Error(ErrorKind::config, "config needs a 'databases' directory");
  if (!fs::is_directory(c.databases_dir))
    throw Error(ErrorKind::config,
                fmt::format("databases dir '{}' does not exist", c.databases_dir));
  if (!c.gold_links_path.empty() && !fs::exists(c.gold_links_path))
    throw Error(ErrorKind::config,
                fmt::format("gold_links '{}' does not exist", c.gold_links_path));
  if (!c.predicted_links_path.empty() && !fs::exists(c.predicted_links_path))
    throw Error(ErrorKind::config,
                fmt::format("predicted_links '{}' does not exist", c.predicted_links_path));
  if (!c.templates_dir.empty() && !fs::exists(c.templates_dir))
    throw Error(ErrorKind::config,
                fmt::format("templates_dir '{}' does not exist", c.templates_dir));

  if (c.variant.link_mode == prompts::LinkMode::perfect) {
    if (c.variant.sql_mode == prompts::SqlMode::direct)
      throw Error(ErrorKind::config,
                  "variant perfect+direct is contradictory: direct ignores links");
    if (c.link_backend && c.link_backend->kind == infer::BackendKind::http)
      throw Error(ErrorKind::config,
                  "perfect link mode runs no link model; an http link_backend is a mistake");
  }

  if (c.parallelism < 1) throw Error(ErrorKind::config, "parallelism must be >= 1");
  if (c.timeout_ms <= 0) throw Error(ErrorKind::config, "timeout_ms must be positive");
  if (c.link_budget.max_tokens <= 0 || c.sql_budget.max_tokens <= 0)
    throw Error(ErrorKind::config, "token budgets must be positive");
  if (c.limit < 0) throw Error(ErrorKind::config, "limit must be >= 0");
  if (c.train_fraction < 0.0 || c.train_fraction > 1.0)
    throw Error(ErrorKind::config, "train_fraction must be in [0, 1]");
  // Backend parameter checks happen when a command resolves the backend it
  // actually uses; extract-links and eval run without one.
}

}  // namespace sqlink::config
