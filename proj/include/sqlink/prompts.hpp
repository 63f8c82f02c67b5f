#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sqlink/chunker.hpp"
#include "sqlink/corpus.hpp"
#include "sqlink/types.hpp"

namespace sqlink::prompts {

enum class LinkMode { non_descriptive, chunked, perfect };
enum class SqlMode { direct, trusting, non_trusting, non_trusting_link_only };

const char* link_mode_name(LinkMode m);
const char* sql_mode_name(SqlMode m);
std::optional<LinkMode> link_mode_from_string(std::string_view s);
std::optional<SqlMode> sql_mode_from_string(std::string_view s);

struct PipelineVariant {
  LinkMode link_mode = LinkMode::non_descriptive;
  SqlMode sql_mode = SqlMode::non_trusting;
};

// "chunked+trusting" and friends; round-trips with variant_from_string.
std::string variant_name(const PipelineVariant& v);
std::optional<PipelineVariant> variant_from_string(std::string_view s);

// Layout text with {question}, {hint}, {schema}, {link}, {instruction}
// placeholders plus the instruction wording substituted into {instruction}.
// The hash pins both parts.
struct Template {
  std::string text;
  std::string instruction;

  std::string hash() const;
};

struct TemplateSet {
  Template link_nd;
  Template link_chunked;
  Template sql_direct;
  Template sql_trusting;
  Template sql_non_trusting;
  Template sql_non_trusting_link_only;

  static TemplateSet defaults();
  const Template& for_link(LinkMode mode) const;
  const Template& for_sql(SqlMode mode) const;
};

// Filenames used by load_templates/write_templates under a directory.
extern const char* const kTemplateFileNames[6];

// Reads the six layout files from dir; instructions stay at their defaults
// unless instructions[name] overrides them.
TemplateSet load_templates(const std::string& dir,
                           const std::map<std::string, std::string>& instructions = {});
void write_templates(const std::string& dir, const TemplateSet& templates);

// One placeholder pass, left to right; substituted values are never
// re-scanned. Lines whose placeholders all resolve to "" and that contain at
// least one placeholder are dropped (so an absent hint removes its line).
std::string instantiate(const std::string& template_text,
                        const std::map<std::string, std::string>& values);

struct RenderedPrompt {
  long long question_id = 0;
  PipelineVariant variant;
  Stage stage = Stage::link;
  std::string text;
  int token_count = 0;
  std::optional<int> chunk_index;
  int chunk_total = 1;
  std::vector<std::string> chunk_tables;
  std::string template_hash;
  std::vector<std::string> shed;  // description lines dropped to fit
};

// Single prompt over the full schema; sheds descriptions to fit the budget,
// budget error if the bare schema still does not fit.
RenderedPrompt build_link_prompt_nd(const DatabaseSchema& schema, const Example& example,
                                    const chunker::TokenBudget& budget,
                                    const TemplateSet& templates);

// One prompt per chunk; the instruction permits answering "None".
std::vector<RenderedPrompt> build_link_prompts_chunked(const DatabaseSchema& schema,
                                                       const Example& example,
                                                       const chunker::TokenBudget& budget,
                                                       const TemplateSet& templates);

// direct: question+hint+schema (shed to fit). trusting: question+hint+link
// only. non_trusting: question+hint+schema+link marked as a suggestion.
// non_trusting_link_only: question+hint+link with the suggestion wording.
RenderedPrompt build_sql_prompt(const PipelineVariant& variant, const DatabaseSchema& schema,
                                const SchemaLink& link, const Example& example,
                                const chunker::TokenBudget& budget,
                                const TemplateSet& templates);

struct SftOptions {
  PipelineVariant variant;
  Stage stage = Stage::link;
  chunker::TokenBudget link_budget = chunker::budget_of(chunker::kDefaultNdBudgetTokens);
  chunker::TokenBudget sql_budget = chunker::budget_of(chunker::kDefaultNdBudgetTokens);
  std::uint64_t seed = 13;
  double train_fraction = 0.85;
  std::string out_prefix;  // writes <prefix>_train.jsonl and <prefix>_val.jsonl
};

struct SftReport {
  int train_examples = 0;
  int val_examples = 0;
  int train_records = 0;
  int val_records = 0;
  std::vector<std::string> skipped;  // "<question_id>: reason"
};

// Seeded shuffle, first floor(train_fraction * N) examples become training
// data. Completions: serialized gold link (link stage; per-chunk restriction
// or "None" when chunked) or gold SQL (sql stage). Non-trusting sql modes
// train against predicted links, which the caller must supply.
SftReport export_sft(const std::vector<Example>& examples, const corpus::SchemaStore& store,
                     const std::map<long long, SchemaLink>& gold_links,
                     const std::map<long long, SchemaLink>* predicted_links,
                     const TemplateSet& templates, const SftOptions& opts);

}  // namespace sqlink::prompts
