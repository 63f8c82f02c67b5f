#include "sqlink/types.hpp"

#include <set>

#include <fmt/format.h>

#include "sqlink/error.hpp"
#include "sqlink/text.hpp"

namespace sqlink {

const ColumnDef* TableDef::find_column(std::string_view column_name) const {
  for (const auto& col : columns) {
    if (ci_equal(col.name, column_name)) return &col;
  }
  return nullptr;
}

std::size_t TableDef::column_index(std::string_view column_name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (ci_equal(columns[i].name, column_name)) return i;
  }
  return static_cast<std::size_t>(-1);
}

bool fk_ci_equal(const ForeignKey& a, const ForeignKey& b) {
  return ci_equal(a.from_table, b.from_table) &&
         ci_equal(a.from_column, b.from_column) &&
         ci_equal(a.to_table, b.to_table) && ci_equal(a.to_column, b.to_column);
}

const TableDef* DatabaseSchema::find_table(std::string_view table_name) const {
  for (const auto& table : tables) {
    if (ci_equal(table.name, table_name)) return &table;
  }
  return nullptr;
}

void DatabaseSchema::validate() const {
  std::set<std::string> seen_tables;
  for (const auto& table : tables) {
    if (table.name.empty())
      throw Error(ErrorKind::validation,
                  fmt::format("schema '{}': empty table name", db_id));
    if (!seen_tables.insert(to_lower(table.name)).second)
      throw Error(ErrorKind::validation,
                  fmt::format("schema '{}': duplicate table name '{}'", db_id,
                              table.name));
    if (table.columns.empty())
      throw Error(ErrorKind::validation,
                  fmt::format("schema '{}': table '{}' has no columns", db_id,
                              table.name));
    std::set<std::string> seen_columns;
    for (const auto& col : table.columns) {
      if (col.name.empty())
        throw Error(ErrorKind::validation,
                    fmt::format("schema '{}': table '{}' has an empty column name",
                                db_id, table.name));
      if (!seen_columns.insert(to_lower(col.name)).second)
        throw Error(ErrorKind::validation,
                    fmt::format("schema '{}': duplicate column '{}' in table '{}'",
                                db_id, col.name, table.name));
    }
  }
  for (const auto& fk : foreign_keys) {
    const TableDef* from = find_table(fk.from_table);
    const TableDef* to = find_table(fk.to_table);
    if (!from || !from->find_column(fk.from_column) || !to ||
        !to->find_column(fk.to_column))
      throw Error(ErrorKind::validation,
                  fmt::format("schema '{}': foreign key {}.{} -> {}.{} does not resolve",
                              db_id, fk.from_table, fk.from_column, fk.to_table,
                              fk.to_column));
  }
}

const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::simple: return "simple";
    case Difficulty::moderate: return "moderate";
    case Difficulty::challenging: return "challenging";
  }
  return "simple";
}

std::optional<Difficulty> difficulty_from_string(std::string_view s) {
  if (ci_equal(s, "simple")) return Difficulty::simple;
  if (ci_equal(s, "moderate")) return Difficulty::moderate;
  if (ci_equal(s, "challenging")) return Difficulty::challenging;
  return std::nullopt;
}

const char* stage_name(Stage s) { return s == Stage::link ? "link" : "sql"; }

std::optional<Stage> stage_from_string(std::string_view s) {
  if (ci_equal(s, "link")) return Stage::link;
  if (ci_equal(s, "sql")) return Stage::sql;
  return std::nullopt;
}

bool SchemaLink::contains(std::string_view table, std::string_view column) const {
  for (const auto& ref : columns) {
    if (ci_equal(ref.table, table) && ci_equal(ref.column, column)) return true;
  }
  return false;
}

bool SchemaLink::contains_table(std::string_view table) const {
  for (const auto& ref : columns) {
    if (ci_equal(ref.table, table)) return true;
  }
  return false;
}

void SchemaLink::add(ColumnRef ref) {
  if (!contains(ref.table, ref.column)) columns.push_back(std::move(ref));
}

void SchemaLink::add(ForeignKey fk) {
  for (const auto& existing : foreign_keys) {
    if (fk_ci_equal(existing, fk)) return;
  }
  foreign_keys.push_back(std::move(fk));
}

std::vector<std::string> SchemaLink::tables() const {
  std::vector<std::string> out;
  for (const auto& ref : columns) {
    bool seen = false;
    for (const auto& t : out) {
      if (ci_equal(t, ref.table)) {
        seen = true;
        break;
      }
    }
    if (!seen) out.push_back(ref.table);
  }
  return out;
}

bool link_equal(const SchemaLink& a, const SchemaLink& b) {
  if (a.columns.size() != b.columns.size() ||
      a.foreign_keys.size() != b.foreign_keys.size())
    return false;
  for (const auto& ref : a.columns) {
    if (!b.contains(ref.table, ref.column)) return false;
  }
  for (const auto& fk : a.foreign_keys) {
    bool found = false;
    for (const auto& other : b.foreign_keys) {
      if (fk_ci_equal(fk, other)) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

SchemaLink restrict_link(const SchemaLink& link,
                         const std::vector<std::string>& tables) {
  auto in_tables = [&](std::string_view name) {
    for (const auto& t : tables) {
      if (ci_equal(t, name)) return true;
    }
    return false;
  };
  SchemaLink out;
  for (const auto& ref : link.columns) {
    if (in_tables(ref.table)) out.add(ref);
  }
  for (const auto& fk : link.foreign_keys) {
    if (in_tables(fk.from_table) && in_tables(fk.to_table) &&
        out.contains_table(fk.from_table) && out.contains_table(fk.to_table))
      out.add(fk);
  }
  return out;
}

}  // namespace sqlink
