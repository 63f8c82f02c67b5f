#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sqlink/text.hpp"
#include "sqlink/types.hpp"

namespace sqlink::corpus {

struct LoadRejection {
  std::size_t index = 0;   // position in the input array
  std::string field;       // offending field, when known
  std::string reason;
};

struct LoadReport {
  std::size_t input_count = 0;
  std::size_t accepted = 0;
  std::vector<LoadRejection> rejected;
  // Indices of records whose missing difficulty was defaulted to simple.
  std::vector<std::size_t> defaulted_difficulty;
};

struct LoadedExamples {
  std::vector<Example> examples;
  LoadReport report;
};

// Reads a BIRD-format question file: a JSON array of objects with keys
// question_id, db_id, question, evidence, SQL, difficulty. Structurally bad
// records are rejected into the report; unparseable JSON throws.
LoadedExamples load_examples(const std::string& path);

// Reads tables, columns, declared types, primary keys and foreign keys from
// a SQLite file. Table and column order follow the database catalog.
DatabaseSchema introspect_schema(const std::string& db_file);

// Header names for the three relevant columns of a description sheet.
struct CsvColumnNames {
  std::string column_name = "original_column_name";
  std::string description = "column_description";
  std::string value_description = "value_description";
};

struct DescriptionWarning {
  std::string file;
  std::size_t row = 0;  // 1-based data row
  std::string message;
};

struct DescriptionReport {
  std::size_t attached = 0;
  std::vector<DescriptionWarning> warnings;
};

// Attaches per-column descriptions from CSV sheets in `sheets_dir`, one file
// per table (matched by file name stem, case-insensitive). Unmatched rows
// become warnings; the schema structure is never altered.
DatabaseSchema attach_descriptions(const DatabaseSchema& schema,
                                   const std::string& sheets_dir,
                                   const CsvColumnNames& columns = {},
                                   DescriptionReport* report = nullptr);

// Parsed CSV: rows of cells. Exposed for tests; handles quotes, embedded
// newlines, CRLF and a UTF-8 BOM.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

// db_id -> schema + database file path.
class SchemaStore {
 public:
  void add(DatabaseSchema schema, std::string db_file);

  // Loads every database under `db_dir`. Supports the BIRD layout
  // (db_dir/<db_id>/<db_id>.sqlite with database_description/*.csv) and a
  // flat layout (db_dir/*.sqlite). Descriptions are attached when present
  // and `with_descriptions` is set.
  static SchemaStore load_dir(const std::string& db_dir,
                              bool with_descriptions = true,
                              const CsvColumnNames& columns = {});

  const DatabaseSchema* find(std::string_view db_id) const;
  const std::string* db_file(std::string_view db_id) const;
  std::vector<std::string> db_ids() const;
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    DatabaseSchema schema;
    std::string db_file;
  };
  std::map<std::string, Entry, CiLess> entries_;
};

}  // namespace sqlink::corpus
