#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlink/types.hpp"

namespace sqlink::postproc {

enum class Extraction { verbatim, fenced_block, first_statement, failed };

const char* extraction_name(Extraction e);
std::optional<Extraction> extraction_from_string(std::string_view s);

struct CleanedSql {
  long long question_id = 0;
  std::string sql;  // empty only when extraction == failed
  Extraction extraction = Extraction::failed;
};

// Cascade: raw text that parses as a SELECT is kept verbatim; otherwise the
// first fenced code block; otherwise a statement-boundary scan from the
// first SELECT/WITH keyword, shrinking at parse-error offsets until a prefix
// parses. Never throws; unusable text comes back as `failed`.
CleanedSql clean_sql(const std::string& raw);

struct ParsedLink {
  SchemaLink link;
  // Unparseable lines and out-of-chunk pairs, with reasons. Flagged pairs
  // stay in the link; validation decides their fate.
  std::vector<std::string> flagged;
};

// Tolerant inverse of serialize_link: accepts "table(col, ...)" lines and
// "a.b = c.d" join lines, bullets and trailing punctuation, and the literal
// "None" for an empty link. An empty chunk_tables disables the
// out-of-chunk check.
ParsedLink parse_link_response(const std::string& raw,
                               const std::vector<std::string>& chunk_tables = {});

// Case-insensitive set union; first-seen casing wins.
SchemaLink merge_links(const std::vector<SchemaLink>& parts);

struct RepairedPair {
  ColumnRef raw;
  ColumnRef canonical;
  std::string reason;
};

struct RejectedPair {
  ColumnRef raw;
  std::string reason;
};

struct LinkValidation {
  SchemaLink accepted;  // resolves fully against the schema, canonical casing
  std::vector<RepairedPair> repaired;
  std::vector<RejectedPair> rejected;
  std::vector<std::string> rejected_fk_lines;
};

// Exact case-insensitive matches are accepted with schema casing; a column
// that lives in exactly one schema table is moved there (unique-home
// repair); everything else is rejected with a reason. Join lines survive
// only when both endpoints resolve and both tables made it into the
// accepted link.
LinkValidation validate_link(const SchemaLink& link, const DatabaseSchema& schema);

}  // namespace sqlink::postproc
