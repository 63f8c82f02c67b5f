#include "sqlink/corpus.hpp"

#include <sqlite3.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "sqlink/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sqlink::corpus {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::io, fmt::format("cannot open '{}'", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Pulls a string field, tolerating numbers (BIRD files are inconsistent).
std::optional<std::string> get_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer())
    return std::to_string(it->get<long long>());
  return std::nullopt;
}

}  // namespace

LoadedExamples load_examples(const std::string& path) {
  std::string text = read_file(path);
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse,
                fmt::format("'{}': malformed JSON at byte {}: {}", path,
                            e.byte, e.what()));
  }
  if (!root.is_array())
    throw Error(ErrorKind::parse,
                fmt::format("'{}': expected a JSON array of question records", path));

  LoadedExamples out;
  out.report.input_count = root.size();
  for (std::size_t i = 0; i < root.size(); ++i) {
    const json& rec = root[i];
    auto reject = [&](std::string field, std::string reason) {
      out.report.rejected.push_back({i, std::move(field), std::move(reason)});
    };
    if (!rec.is_object()) {
      reject("", "record is not a JSON object");
      continue;
    }
    Example ex;
    if (auto it = rec.find("question_id"); it != rec.end() && it->is_number()) {
      ex.question_id = it->get<long long>();
    } else {
      reject("question_id", "missing or non-numeric");
      continue;
    }
    auto db_id = get_string(rec, "db_id");
    if (!db_id || db_id->empty()) {
      reject("db_id", "missing");
      continue;
    }
    ex.db_id = *db_id;
    auto question = get_string(rec, "question");
    if (!question || question->empty()) {
      reject("question", "missing");
      continue;
    }
    ex.question = *question;
    ex.evidence = get_string(rec, "evidence").value_or("");
    auto sql = get_string(rec, "SQL");
    if (!sql) sql = get_string(rec, "sql");
    if (!sql || trim(*sql).empty()) {
      reject("SQL", "missing or empty gold SQL");
      continue;
    }
    ex.gold_sql = *sql;
    if (auto diff = get_string(rec, "difficulty"); diff && !trim(*diff).empty()) {
      auto parsed = difficulty_from_string(trim(*diff));
      if (!parsed) {
        reject("difficulty",
               fmt::format("unknown difficulty label '{}' at record {}", *diff, i));
        continue;
      }
      ex.difficulty = *parsed;
    } else {
      // Some BIRD train releases ship without difficulty labels.
      ex.difficulty = Difficulty::simple;
      out.report.defaulted_difficulty.push_back(i);
    }
    out.examples.push_back(std::move(ex));
  }
  out.report.accepted = out.examples.size();
  return out;
}

namespace {

class SqliteDb {
 public:
  explicit SqliteDb(const std::string& path) {
    int rc = sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READONLY, nullptr);
    if (rc != SQLITE_OK) {
      std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
      sqlite3_close(db_);
      db_ = nullptr;
      throw Error(ErrorKind::io,
                  fmt::format("cannot open database '{}': {}", path, msg));
    }
  }
  ~SqliteDb() { sqlite3_close(db_); }
  SqliteDb(const SqliteDb&) = delete;
  SqliteDb& operator=(const SqliteDb&) = delete;

  sqlite3* get() const { return db_; }

 private:
  sqlite3* db_ = nullptr;
};

class SqliteStmt {
 public:
  SqliteStmt(sqlite3* db, const std::string& sql) : db_(db) {
    int rc = sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt_, nullptr);
    if (rc != SQLITE_OK)
      throw Error(ErrorKind::io,
                  fmt::format("sqlite prepare failed: {}", sqlite3_errmsg(db)));
  }
  ~SqliteStmt() { sqlite3_finalize(stmt_); }
  SqliteStmt(const SqliteStmt&) = delete;
  SqliteStmt& operator=(const SqliteStmt&) = delete;

  bool step() {
    int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(ErrorKind::io,
                fmt::format("sqlite step failed: {}", sqlite3_errmsg(db_)));
  }
  std::string text(int col) const {
    const unsigned char* p = sqlite3_column_text(stmt_, col);
    return p ? reinterpret_cast<const char*>(p) : "";
  }
  long long integer(int col) const { return sqlite3_column_int64(stmt_, col); }
  bool is_null(int col) const {
    return sqlite3_column_type(stmt_, col) == SQLITE_NULL;
  }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

// Identifiers must be quoted when interpolated into PRAGMA statements;
// BIRD table names contain spaces and punctuation.
std::string quote_identifier(const std::string& name) {
  std::string out = "\"";
  for (char c : name) {
    out += c;
    if (c == '"') out += c;
  }
  out += '"';
  return out;
}

}  // namespace

DatabaseSchema introspect_schema(const std::string& db_file) {
  SqliteDb db(db_file);
  DatabaseSchema schema;
  schema.db_id = fs::path(db_file).stem().string();

  {
    // rowid order in sqlite_master is creation order, the catalog order
    // BIRD prompts rely on.
    SqliteStmt stmt(db.get(),
                    "SELECT name FROM sqlite_master WHERE type='table' "
                    "AND name NOT LIKE 'sqlite_%' ORDER BY rowid");
    while (stmt.step()) {
      TableDef table;
      table.name = stmt.text(0);
      schema.tables.push_back(std::move(table));
    }
  }
  if (schema.tables.empty())
    throw Error(ErrorKind::validation,
                fmt::format("database '{}' has no tables", db_file));

  for (auto& table : schema.tables) {
    SqliteStmt stmt(db.get(), fmt::format("PRAGMA table_info({})",
                                          quote_identifier(table.name)));
    while (stmt.step()) {
      ColumnDef col;
      col.name = stmt.text(1);
      col.sql_type = stmt.text(2);
      col.is_primary_key = stmt.integer(5) > 0;
      table.columns.push_back(std::move(col));
    }
    if (table.columns.empty())
      throw Error(ErrorKind::validation,
                  fmt::format("database '{}': table '{}' has no columns",
                              db_file, table.name));
  }

  for (auto& table : schema.tables) {
    SqliteStmt stmt(db.get(), fmt::format("PRAGMA foreign_key_list({})",
                                          quote_identifier(table.name)));
    while (stmt.step()) {
      ForeignKey fk;
      fk.from_table = table.name;
      fk.to_table = stmt.text(2);
      fk.from_column = stmt.text(3);
      fk.to_column = stmt.text(4);
      if (fk.to_column.empty() || stmt.is_null(4)) {
        // FK against the target's implicit primary key.
        if (const TableDef* target = schema.find_table(fk.to_table)) {
          for (const auto& col : target->columns) {
            if (col.is_primary_key) {
              fk.to_column = col.name;
              break;
            }
          }
        }
      }
      if (!fk.to_column.empty() && schema.find_table(fk.to_table))
        schema.foreign_keys.push_back(std::move(fk));
    }
  }

  schema.validate();
  return schema;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::string text = read_file(path);
  // Strip UTF-8 BOM.
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB &&
      static_cast<unsigned char>(text[2]) == 0xBF)
    text.erase(0, 3);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool in_quotes = false;
  bool row_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_started = true;
        break;
      case ',':
        row.push_back(std::move(cell));
        cell.clear();
        row_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_started || !cell.empty()) {
          row.push_back(std::move(cell));
          cell.clear();
          rows.push_back(std::move(row));
          row.clear();
          row_started = false;
        }
        break;
      default:
        cell += c;
        row_started = true;
        break;
    }
  }
  if (row_started || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

DatabaseSchema attach_descriptions(const DatabaseSchema& schema,
                                   const std::string& sheets_dir,
                                   const CsvColumnNames& columns,
                                   DescriptionReport* report) {
  if (!fs::is_directory(sheets_dir))
    throw Error(ErrorKind::io,
                fmt::format("description directory '{}' not found", sheets_dir));

  DatabaseSchema out = schema;
  DescriptionReport local;
  DescriptionReport& rep = report ? *report : local;

  std::vector<fs::path> sheets;
  for (const auto& entry : fs::directory_iterator(sheets_dir)) {
    if (entry.is_regular_file() && ci_equal(entry.path().extension().string(), ".csv"))
      sheets.push_back(entry.path());
  }
  std::sort(sheets.begin(), sheets.end());

  for (const auto& sheet : sheets) {
    std::string stem = sheet.stem().string();
    TableDef* table = nullptr;
    for (auto& t : out.tables) {
      if (ci_equal(t.name, std::string_view(trim(stem)))) {
        table = &t;
        break;
      }
    }
    if (!table) {
      rep.warnings.push_back(
          {sheet.filename().string(), 0,
           fmt::format("no table matches sheet '{}'", stem)});
      continue;
    }

    std::vector<std::vector<std::string>> rows;
    try {
      rows = read_csv(sheet.string());
    } catch (const Error&) {
      throw Error(ErrorKind::io,
                  fmt::format("cannot read description sheet '{}'",
                              sheet.filename().string()));
    }
    if (rows.empty()) continue;

    const auto& header = rows.front();
    auto find_col = [&](const std::string& name) -> int {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (ci_equal(std::string_view(trim(header[i])), name)) return static_cast<int>(i);
      }
      return -1;
    };
    int name_idx = find_col(columns.column_name);
    int desc_idx = find_col(columns.description);
    int value_idx = find_col(columns.value_description);
    if (name_idx < 0) {
      rep.warnings.push_back(
          {sheet.filename().string(), 0,
           fmt::format("header lacks column '{}'", columns.column_name)});
      continue;
    }

    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& cells = rows[r];
      auto cell = [&](int idx) -> std::string {
        if (idx < 0 || static_cast<std::size_t>(idx) >= cells.size()) return "";
        return std::string(trim(cells[idx]));
      };
      std::string col_name = cell(name_idx);
      if (col_name.empty()) continue;
      ColumnDef* col = nullptr;
      for (auto& c : table->columns) {
        if (ci_equal(c.name, col_name)) {
          col = &c;
          break;
        }
      }
      if (!col) {
        rep.warnings.push_back(
            {sheet.filename().string(), r,
             fmt::format("no column '{}' in table '{}'", col_name, table->name)});
        continue;
      }
      std::string desc = cell(desc_idx);
      std::string value_desc = cell(value_idx);
      if (!desc.empty()) col->description = desc;
      if (!value_desc.empty()) col->value_description = value_desc;
      if (!desc.empty() || !value_desc.empty()) ++rep.attached;
    }
  }
  return out;
}

void SchemaStore::add(DatabaseSchema schema, std::string db_file) {
  std::string key = schema.db_id;
  entries_[key] = Entry{std::move(schema), std::move(db_file)};
}

SchemaStore SchemaStore::load_dir(const std::string& db_dir,
                                  bool with_descriptions,
                                  const CsvColumnNames& columns) {
  if (!fs::is_directory(db_dir))
    throw Error(ErrorKind::io,
                fmt::format("database directory '{}' not found", db_dir));
  SchemaStore store;

  auto is_sqlite_file = [](const fs::path& p) {
    auto ext = to_lower(p.extension().string());
    return ext == ".sqlite" || ext == ".db" || ext == ".sqlite3";
  };

  std::vector<fs::path> entries;
  for (const auto& entry : fs::directory_iterator(db_dir))
    entries.push_back(entry.path());
  std::sort(entries.begin(), entries.end());

  for (const auto& path : entries) {
    if (fs::is_directory(path)) {
      // BIRD layout: <db_id>/<db_id>.sqlite
      fs::path db_file;
      for (const auto& inner : fs::directory_iterator(path)) {
        if (inner.is_regular_file() && is_sqlite_file(inner.path())) {
          db_file = inner.path();
          break;
        }
      }
      if (db_file.empty()) continue;
      DatabaseSchema schema = introspect_schema(db_file.string());
      schema.db_id = path.filename().string();
      fs::path desc_dir = path / "database_description";
      if (with_descriptions && fs::is_directory(desc_dir))
        schema = attach_descriptions(schema, desc_dir.string(), columns);
      store.add(std::move(schema), db_file.string());
    } else if (fs::is_regular_file(path) && is_sqlite_file(path)) {
      DatabaseSchema schema = introspect_schema(path.string());
      store.add(std::move(schema), path.string());
    }
  }
  return store;
}

const DatabaseSchema* SchemaStore::find(std::string_view db_id) const {
  auto it = entries_.find(db_id);
  return it == entries_.end() ? nullptr : &it->second.schema;
}

const std::string* SchemaStore::db_file(std::string_view db_id) const {
  auto it = entries_.find(db_id);
  return it == entries_.end() ? nullptr : &it->second.db_file;
}

std::vector<std::string> SchemaStore::db_ids() const {
  std::vector<std::string> ids;
  ids.reserve(entries_.size());
  for (const auto& [id, _] : entries_) ids.push_back(id);
  return ids;
}

}  // namespace sqlink::corpus
