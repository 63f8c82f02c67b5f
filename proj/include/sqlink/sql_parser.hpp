#pragma once

#include <string_view>

#include "sqlink/sql_ast.hpp"

namespace sqlink::sql {

// Parses one SQLite SELECT statement (comments and a trailing semicolon are
// tolerated). Anything outside the supported grammar raises SqlError with
// the offending token and byte offset; there is no partial parse.
SelectStmt parse_sql(std::string_view sql);

}  // namespace sqlink::sql
