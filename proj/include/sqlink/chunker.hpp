#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sqlink/types.hpp"

namespace sqlink::chunker {

enum class TokenizerId { heuristic, external };

struct TokenBudget {
  int max_tokens = 4096;
  TokenizerId tokenizer = TokenizerId::heuristic;
  // Shell command reading text on stdin and printing a token count.
  std::string external_command;
};

// Stage defaults: chunked link prompts target 4096 tokens, single-prompt
// (non-descriptive) link and SQL prompts target 5000.
inline constexpr int kDefaultChunkBudgetTokens = 4096;
inline constexpr int kDefaultNdBudgetTokens = 5000;

inline TokenBudget budget_of(int max_tokens) {
  TokenBudget b;
  b.max_tokens = max_tokens;
  return b;
}

// Heuristic mode counts ceil(bytes / 4); external mode invokes the
// configured command and returns its count (tooling error on failure).
int count_tokens(const std::string& text, const TokenBudget& budget);

// One column line of a schema rendering; descriptions can be shed.
struct ColumnRendering {
  std::string name;
  std::string sql_type;
  bool is_primary_key = false;
  std::optional<std::string> description;
  std::optional<std::string> value_description;
};

struct TableRendering {
  std::string name;
  std::vector<ColumnRendering> columns;
  // Cross-chunk foreign-key targets noted on the owning side.
  std::vector<std::string> related_tables;
  bool continuation = false;  // later part of a column-split table
};

struct SchemaRendering {
  std::vector<TableRendering> tables;
  std::vector<ForeignKey> fk_lines;  // both endpoints rendered in this text
};

// Builds the rendering of the whole schema (all tables, FK lines for every
// foreign key) in catalog order.
SchemaRendering make_rendering(const DatabaseSchema& schema);

// Rendering of a subset of tables: FK lines whose endpoints are both in the
// subset, "Related table" notes for owning-side FKs that cross the subset
// boundary.
SchemaRendering make_rendering(const DatabaseSchema& schema,
                               const std::vector<std::string>& tables);

std::string render(const SchemaRendering& rendering);

struct ShedReport {
  // Human-readable entries, e.g. "schools.Charter: value description".
  std::vector<std::string> dropped;
  bool fits = false;
};

using MeasureFn = std::function<int(const SchemaRendering&)>;

// Drops value descriptions, then descriptions, column by column from the
// last table backward, until `measure` fits the budget. May leave the
// rendering still over budget; the report says so and the caller decides.
ShedReport shed_descriptions(SchemaRendering& rendering, const TokenBudget& budget,
                             const MeasureFn& measure = {});

struct PromptChunk {
  int index = 0;
  int total = 0;
  std::string text;
  std::vector<std::string> included_tables;
  int token_count = 0;
  // Non-empty when a single oversized table had to be split by columns or
  // stripped of its descriptions to fit.
  std::vector<std::string> split_tables;
  std::vector<std::string> shed;
};

// Scaffold: turns a table rendering into the full prompt text the budget is
// measured against (template + question + hint + schema text).
using ScaffoldFn = std::function<std::string(const SchemaRendering&)>;

// Greedy first-fit in catalog order: adds one table at a time until the
// prompt cannot fit another, then opens the next chunk. The question and
// hint are part of every chunk via the scaffold. Oversized single tables
// shed their descriptions first and are split by columns as a last resort;
// a single unsplittable column raises a budget error, as does a scaffold
// that exceeds the budget on its own.
std::vector<PromptChunk> chunk_schema(const DatabaseSchema& schema,
                                      const ScaffoldFn& scaffold,
                                      const TokenBudget& budget);

}  // namespace sqlink::chunker
