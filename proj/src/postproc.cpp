#include "sqlink/postproc.hpp"

#include <cctype>

#include <fmt/format.h>

#include "sqlink/error.hpp"
#include "sqlink/sql_parser.hpp"
#include "sqlink/text.hpp"

namespace sqlink::postproc {

const char* extraction_name(Extraction e) {
  switch (e) {
    case Extraction::verbatim: return "verbatim";
    case Extraction::fenced_block: return "fenced_block";
    case Extraction::first_statement: return "first_statement";
    case Extraction::failed: return "failed";
  }
  return "failed";
}

std::optional<Extraction> extraction_from_string(std::string_view s) {
  if (ci_equal(s, "verbatim")) return Extraction::verbatim;
  if (ci_equal(s, "fenced_block")) return Extraction::fenced_block;
  if (ci_equal(s, "first_statement")) return Extraction::first_statement;
  if (ci_equal(s, "failed")) return Extraction::failed;
  return std::nullopt;
}

namespace {

bool parses(const std::string& text) {
  try {
    sql::parse_sql(text);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::optional<std::string> first_fenced_block(const std::string& raw) {
  auto open = raw.find("```");
  if (open == std::string::npos) return std::nullopt;
  auto after = open + 3;
  auto close = raw.find("```", after);
  auto nl = raw.find('\n', after);
  if (nl != std::string::npos && (close == std::string::npos || nl < close)) {
    // Text between the fence and the newline is a language tag.
    auto content_start = nl + 1;
    if (close == std::string::npos) return raw.substr(content_start);
    return raw.substr(content_start, close - content_start);
  }
  if (close == std::string::npos) return raw.substr(after);
  return raw.substr(after, close - after);
}

bool word_at(const std::string& raw, std::size_t pos, std::string_view word) {
  if (pos + word.size() > raw.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    char a = static_cast<char>(std::toupper(static_cast<unsigned char>(raw[pos + i])));
    if (a != word[i]) return false;
  }
  auto end = pos + word.size();
  if (end < raw.size()) {
    unsigned char next = static_cast<unsigned char>(raw[end]);
    if (std::isalnum(next) || next == '_') return false;
  }
  return true;
}

// Quote/comment-aware scan from `start` to the first top-level semicolon.
std::size_t statement_end(const std::string& raw, std::size_t start) {
  std::size_t i = start;
  while (i < raw.size()) {
    char c = raw[i];
    if (c == '\'' || c == '"' || c == '`') {
      char quote = c;
      ++i;
      while (i < raw.size()) {
        if (raw[i] == quote) {
          if (i + 1 < raw.size() && raw[i + 1] == quote) {
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        ++i;
      }
      continue;
    }
    if (c == '[') {
      auto end = raw.find(']', i + 1);
      i = end == std::string::npos ? raw.size() : end + 1;
      continue;
    }
    if (c == '-' && i + 1 < raw.size() && raw[i + 1] == '-') {
      auto end = raw.find('\n', i);
      i = end == std::string::npos ? raw.size() : end + 1;
      continue;
    }
    if (c == '/' && i + 1 < raw.size() && raw[i + 1] == '*') {
      auto end = raw.find("*/", i + 2);
      i = end == std::string::npos ? raw.size() : end + 2;
      continue;
    }
    if (c == ';') return i;
    ++i;
  }
  return raw.size();
}

std::optional<std::string> boundary_scan(const std::string& raw) {
  std::size_t start = std::string::npos;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (i > 0) {
      unsigned char prev = static_cast<unsigned char>(raw[i - 1]);
      if (std::isalnum(prev) || prev == '_') continue;
    }
    if (word_at(raw, i, "SELECT") || word_at(raw, i, "WITH")) {
      start = i;
      break;
    }
  }
  if (start == std::string::npos) return std::nullopt;

  std::string candidate = raw.substr(start, statement_end(raw, start) - start);
  // Shrink at parse-error offsets until a prefix parses; the offsets point
  // at the first offending token, so each round drops trailing prose.
  for (int round = 0; round < 8; ++round) {
    candidate = std::string(trim(candidate));
    if (candidate.empty()) return std::nullopt;
    try {
      sql::parse_sql(candidate);
      return candidate;
    } catch (const SqlError& e) {
      if (e.offset() == 0 || e.offset() >= candidate.size()) return std::nullopt;
      candidate = candidate.substr(0, e.offset());
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

CleanedSql clean_sql(const std::string& raw) {
  CleanedSql out;
  std::string whole{trim(raw)};
  if (!whole.empty() && parses(whole)) {
    out.sql = std::move(whole);
    out.extraction = Extraction::verbatim;
    return out;
  }
  if (auto block = first_fenced_block(raw)) {
    std::string content{trim(*block)};
    if (!content.empty()) {
      if (parses(content)) {
        out.sql = std::move(content);
        out.extraction = Extraction::fenced_block;
        return out;
      }
      // Fenced prose around the query: scan inside the fence first.
      if (auto stmt = boundary_scan(content)) {
        out.sql = std::move(*stmt);
        out.extraction = Extraction::fenced_block;
        return out;
      }
    }
  }
  if (auto stmt = boundary_scan(raw)) {
    out.sql = std::move(*stmt);
    out.extraction = Extraction::first_statement;
    return out;
  }
  return out;
}

namespace {

std::string_view strip_wrapping(std::string_view s) {
  s = trim(s);
  while (s.size() >= 2) {
    char a = s.front();
    char b = s.back();
    if ((a == '"' && b == '"') || (a == '\'' && b == '\'') || (a == '`' && b == '`') ||
        (a == '[' && b == ']')) {
      s = trim(s.substr(1, s.size() - 2));
      continue;
    }
    break;
  }
  return s;
}

std::string_view strip_bullet(std::string_view s) {
  s = trim(s);
  if (!s.empty() && (s.front() == '-' || s.front() == '*')) return trim(s.substr(1));
  // "1." / "2)" list markers
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) return trim(s.substr(i + 1));
  return s;
}

std::string_view strip_trailing_punct(std::string_view s) {
  s = trim(s);
  while (!s.empty()) {
    char c = s.back();
    if (c == '.' || c == ',' || c == ';' || c == ':') {
      s = trim(s.substr(0, s.size() - 1));
      continue;
    }
    break;
  }
  return s;
}

// "a.b" -> (a, b) at the last dot, unwrapping quotes on both parts.
std::optional<ColumnRef> split_qualified(std::string_view s) {
  auto dot = s.rfind('.');
  if (dot == std::string_view::npos) return std::nullopt;
  std::string table{strip_wrapping(s.substr(0, dot))};
  std::string column{strip_wrapping(s.substr(dot + 1))};
  if (table.empty() || column.empty()) return std::nullopt;
  return ColumnRef{std::move(table), std::move(column)};
}

bool in_tables(const std::vector<std::string>& tables, std::string_view name) {
  for (const auto& t : tables)
    if (ci_equal(t, name)) return true;
  return false;
}

}  // namespace

ParsedLink parse_link_response(const std::string& raw,
                               const std::vector<std::string>& chunk_tables) {
  ParsedLink out;
  auto note_pair = [&](ColumnRef ref) {
    if (!chunk_tables.empty() && !in_tables(chunk_tables, ref.table))
      out.flagged.push_back(fmt::format("pair outside chunk: {}.{}", ref.table, ref.column));
    out.link.add(std::move(ref));
  };

  for (const auto& raw_line : split_lines(raw)) {
    std::string_view line = strip_trailing_punct(strip_bullet(raw_line));
    if (line.empty()) continue;
    if (ci_equal(line, "none")) continue;

    if (auto eq = line.find('='); eq != std::string_view::npos &&
                                  line.find('(') == std::string_view::npos) {
      auto left = split_qualified(trim(line.substr(0, eq)));
      auto right = split_qualified(trim(line.substr(eq + 1)));
      if (left && right) {
        if (!chunk_tables.empty()) {
          if (!in_tables(chunk_tables, left->table))
            out.flagged.push_back(fmt::format("join endpoint outside chunk: {}.{}",
                                              left->table, left->column));
          if (!in_tables(chunk_tables, right->table))
            out.flagged.push_back(fmt::format("join endpoint outside chunk: {}.{}",
                                              right->table, right->column));
        }
        out.link.add(ForeignKey{left->table, left->column, right->table, right->column});
        continue;
      }
      out.flagged.push_back(fmt::format("unparseable line: {}", std::string(trim(raw_line))));
      continue;
    }

    // One or more "table(col, ...)" groups on the line.
    std::string_view rest = line;
    bool any = false;
    bool bad = false;
    while (!rest.empty()) {
      auto open = rest.find('(');
      if (open == std::string_view::npos) {
        if (!trim(rest).empty()) bad = true;
        break;
      }
      auto close = rest.find(')', open + 1);
      if (close == std::string_view::npos) {
        bad = true;
        break;
      }
      std::string table{strip_wrapping(rest.substr(0, open))};
      if (table.empty()) {
        bad = true;
        break;
      }
      std::string_view inner = rest.substr(open + 1, close - open - 1);
      std::size_t pos = 0;
      while (pos <= inner.size()) {
        auto comma = inner.find(',', pos);
        std::string_view cell =
            comma == std::string_view::npos ? inner.substr(pos) : inner.substr(pos, comma - pos);
        std::string column{strip_wrapping(cell)};
        if (!column.empty()) {
          note_pair(ColumnRef{table, std::move(column)});
          any = true;
        }
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
      }
      rest = trim(rest.substr(close + 1));
      if (!rest.empty() && rest.front() == ',') rest = trim(rest.substr(1));
    }
    if (bad || !any)
      out.flagged.push_back(fmt::format("unparseable line: {}", std::string(trim(raw_line))));
  }
  return out;
}

SchemaLink merge_links(const std::vector<SchemaLink>& parts) {
  SchemaLink out;
  for (const auto& part : parts) {
    for (const auto& ref : part.columns) out.add(ref);
    for (const auto& fk : part.foreign_keys) out.add(fk);
  }
  return out;
}

LinkValidation validate_link(const SchemaLink& link, const DatabaseSchema& schema) {
  LinkValidation v;

  auto unique_home = [&](std::string_view column) -> std::optional<ColumnRef> {
    const TableDef* home = nullptr;
    const ColumnDef* home_col = nullptr;
    int homes = 0;
    for (const auto& table : schema.tables) {
      if (const ColumnDef* c = table.find_column(column)) {
        ++homes;
        home = &table;
        home_col = c;
      }
    }
    if (homes != 1) return std::nullopt;
    return ColumnRef{home->name, home_col->name};
  };

  for (const auto& ref : link.columns) {
    const TableDef* table = schema.find_table(ref.table);
    if (table) {
      if (const ColumnDef* col = table->find_column(ref.column)) {
        ColumnRef canonical{table->name, col->name};
        if (canonical.table != ref.table || canonical.column != ref.column)
          v.repaired.push_back({ref, canonical, "casing"});
        v.accepted.add(std::move(canonical));
        continue;
      }
    }
    if (auto canonical = unique_home(ref.column)) {
      v.repaired.push_back({ref, *canonical,
                            table ? "column not in that table, unique elsewhere"
                                  : "unknown table, column unique elsewhere"});
      v.accepted.add(std::move(*canonical));
      continue;
    }
    std::string reason;
    if (!table)
      reason = fmt::format("unknown table '{}'", ref.table);
    else
      reason = fmt::format("no column '{}' in '{}' or uniquely elsewhere", ref.column,
                           ref.table);
    v.rejected.push_back({ref, std::move(reason)});
  }

  for (const auto& fk : link.foreign_keys) {
    auto line = fmt::format("{}.{} = {}.{}", fk.from_table, fk.from_column, fk.to_table,
                            fk.to_column);
    const TableDef* from = schema.find_table(fk.from_table);
    const TableDef* to = schema.find_table(fk.to_table);
    const ColumnDef* from_col = from ? from->find_column(fk.from_column) : nullptr;
    const ColumnDef* to_col = to ? to->find_column(fk.to_column) : nullptr;
    if (!from_col || !to_col) {
      v.rejected_fk_lines.push_back(fmt::format("{}: endpoint not in schema", line));
      continue;
    }
    if (!v.accepted.contains_table(from->name) || !v.accepted.contains_table(to->name)) {
      v.rejected_fk_lines.push_back(
          fmt::format("{}: endpoint table not in accepted link", line));
      continue;
    }
    v.accepted.add(ForeignKey{from->name, from_col->name, to->name, to_col->name});
  }
  return v;
}

}  // namespace sqlink::postproc
