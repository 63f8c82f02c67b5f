#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sqlink/corpus.hpp"
#include "sqlink/types.hpp"

namespace sqlink::linkex {

// Reverse-engineers the schema link of one query: every (table, column) the
// statement actually touches, in the schema's canonical casing, plus every
// schema foreign key whose endpoint tables both appear in the result.
// Column references are resolved through aliases, subqueries and CTEs down
// to base tables; `*` expands to concrete columns.
//
// Throws SqlError for unparseable SQL and Error(validation) for unknown or
// ambiguous references.
SchemaLink extract_links(std::string_view sql, const DatabaseSchema& schema);

// Canonical text form: one line per table, `table(colA, colB)`, tables
// sorted case-insensitively and columns kept in link order; then one line
// per foreign key, `from_table.col = to_table.col`, sorted. An empty link
// serializes to "None".
std::string serialize_link(const SchemaLink& link);

struct ExtractionFailure {
  long long question_id = 0;
  std::string db_id;
  std::string reason;
};

struct GoldLinkBatch {
  std::map<long long, SchemaLink> links;
  std::vector<ExtractionFailure> failures;
};

// Per-example extract_links over a corpus; parse and resolution failures are
// collected, never aborting the batch.
GoldLinkBatch build_gold_links(const std::vector<Example>& examples,
                               const corpus::SchemaStore& store);

}  // namespace sqlink::linkex
