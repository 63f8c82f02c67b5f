#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace testsup {

namespace fs = std::filesystem;

// Self-deleting scratch directory under the system temp root.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

// Runs a SQL script against the file (created if absent); throws on error.
void exec_script(const fs::path& db_file, const std::string& script);

struct ColumnSpec {
  std::string name;
  std::string type;
  bool primary_key = false;
};

struct TableSpec {
  std::string name;
  std::vector<ColumnSpec> columns;
  // One SQL literal per column, e.g. {"'01'", "120.0", "NULL"}.
  std::vector<std::vector<std::string>> rows;
};

struct FkSpec {
  std::string from_table;
  std::string from_column;
  std::string to_table;
  std::string to_column;
};

struct DbSpec {
  std::string db_id;
  std::vector<TableSpec> tables;
  std::vector<FkSpec> foreign_keys;
};

std::string quote_ident(const std::string& name);

// Materializes the spec as a SQLite file. A non-empty omit_table/omit_column
// drops that column, its row literals and any foreign key touching it, which
// is how the column-removal probes rebuild a database minus one column.
void build_db(const fs::path& db_file, const DbSpec& spec,
              const std::string& omit_table = {},
              const std::string& omit_column = {});

// Three fixed schemas the suites share: an education-flavored one with
// string keys, a shop with deliberately reused column names (id, name), and
// a library whose identifiers contain spaces.
DbSpec schools_spec();
DbSpec shop_spec();
DbSpec library_spec();

struct QuestionSpec {
  long long question_id = 0;
  std::string db_id;
  std::string question;
  std::string evidence;
  std::string sql;
  std::string difficulty = "simple";
};

// BIRD-format question array; an empty difficulty omits the key.
void write_questions(const fs::path& file, const std::vector<QuestionSpec>& questions);

// BIRD database layout: root/<db_id>/<db_id>.sqlite per spec.
void write_database_tree(const fs::path& root, const std::vector<DbSpec>& specs);

std::string read_file(const fs::path& file);
void write_file(const fs::path& file, const std::string& content);

struct CliResult {
  int exit_code = 0;
  std::string output;  // stdout and stderr interleaved
};

// Runs the command-line binary; arguments are shell-quoted.
CliResult run_cli(const std::vector<std::string>& args);

}  // namespace testsup
