#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sqlink {

struct ColumnDef {
  std::string name;
  std::string sql_type;
  std::optional<std::string> description;
  std::optional<std::string> value_description;
  bool is_primary_key = false;
};

struct TableDef {
  std::string name;
  std::vector<ColumnDef> columns;

  const ColumnDef* find_column(std::string_view column_name) const;
  // Index in catalog order, or npos.
  std::size_t column_index(std::string_view column_name) const;
};

struct ForeignKey {
  std::string from_table;
  std::string from_column;
  std::string to_table;
  std::string to_column;
};

bool fk_ci_equal(const ForeignKey& a, const ForeignKey& b);

struct DatabaseSchema {
  std::string db_id;
  std::vector<TableDef> tables;
  std::vector<ForeignKey> foreign_keys;

  const TableDef* find_table(std::string_view table_name) const;
  // Throws Error(validation) when a foreign key endpoint does not resolve or
  // table/column names collide case-insensitively.
  void validate() const;
};

enum class Difficulty { simple, moderate, challenging };

const char* difficulty_name(Difficulty d);
std::optional<Difficulty> difficulty_from_string(std::string_view s);

enum class Stage { link, sql };

const char* stage_name(Stage s);
std::optional<Stage> stage_from_string(std::string_view s);

struct Example {
  long long question_id = 0;
  std::string db_id;
  std::string question;
  std::string evidence;  // external-knowledge hint; empty when absent
  std::string gold_sql;
  Difficulty difficulty = Difficulty::simple;
};

// One (table, column) reference inside a schema link.
struct ColumnRef {
  std::string table;
  std::string column;
};

// The set of columns and foreign keys needed to answer one question.
// Membership is case-insensitive; first-seen casing is kept on insert.
struct SchemaLink {
  std::vector<ColumnRef> columns;
  std::vector<ForeignKey> foreign_keys;

  bool empty() const { return columns.empty() && foreign_keys.empty(); }
  bool contains(std::string_view table, std::string_view column) const;
  bool contains_table(std::string_view table) const;
  void add(ColumnRef ref);
  void add(ForeignKey fk);
  // Distinct tables in first-appearance order.
  std::vector<std::string> tables() const;
};

// Case-insensitive set equality over columns and foreign keys.
bool link_equal(const SchemaLink& a, const SchemaLink& b);

// Keeps only columns whose table is in `tables` and foreign keys with both
// endpoints among those tables.
SchemaLink restrict_link(const SchemaLink& link,
                         const std::vector<std::string>& tables);

}  // namespace sqlink
