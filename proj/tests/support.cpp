#include "support.hpp"

#include <sqlite3.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace testsup {

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "sqlink-test-XXXXXX").string();
  std::vector<char> buf(tmpl.begin(), tmpl.end());
  buf.push_back('\0');
  if (!mkdtemp(buf.data()))
    throw std::runtime_error("mkdtemp failed for " + tmpl);
  path_ = buf.data();
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void exec_script(const fs::path& db_file, const std::string& script) {
  sqlite3* db = nullptr;
  if (sqlite3_open(db_file.string().c_str(), &db) != SQLITE_OK) {
    std::string msg = db ? sqlite3_errmsg(db) : "out of memory";
    sqlite3_close(db);
    throw std::runtime_error("cannot open " + db_file.string() + ": " + msg);
  }
  char* err = nullptr;
  int rc = sqlite3_exec(db, script.c_str(), nullptr, nullptr, &err);
  std::string msg = err ? err : "";
  sqlite3_free(err);
  sqlite3_close(db);
  if (rc != SQLITE_OK)
    throw std::runtime_error("script failed on " + db_file.string() + ": " + msg);
}

std::string quote_ident(const std::string& name) {
  std::string out = "\"";
  for (char c : name) {
    out += c;
    if (c == '"') out += c;
  }
  out += '"';
  return out;
}

void build_db(const fs::path& db_file, const DbSpec& spec,
              const std::string& omit_table, const std::string& omit_column) {
  std::string script;
  for (const auto& table : spec.tables) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
      if (table.name == omit_table && table.columns[i].name == omit_column) continue;
      kept.push_back(i);
    }
    if (kept.empty())
      throw std::runtime_error("omitting the only column of " + table.name);

    std::string stmt = "CREATE TABLE " + quote_ident(table.name) + " (";
    std::string pk;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const auto& col = table.columns[kept[k]];
      if (k) stmt += ", ";
      stmt += quote_ident(col.name);
      if (!col.type.empty()) stmt += " " + col.type;
      if (col.primary_key) {
        if (!pk.empty()) pk += ", ";
        pk += quote_ident(col.name);
      }
    }
    if (!pk.empty()) stmt += ", PRIMARY KEY (" + pk + ")";
    for (const auto& fk : spec.foreign_keys) {
      if (fk.from_table != table.name) continue;
      bool touches_omitted =
          (fk.from_table == omit_table && fk.from_column == omit_column) ||
          (fk.to_table == omit_table && fk.to_column == omit_column);
      if (touches_omitted) continue;
      stmt += ", FOREIGN KEY (" + quote_ident(fk.from_column) + ") REFERENCES " +
              quote_ident(fk.to_table) + " (" + quote_ident(fk.to_column) + ")";
    }
    stmt += ");\n";
    script += stmt;

    for (const auto& row : table.rows) {
      if (row.size() != table.columns.size())
        throw std::runtime_error("row arity mismatch in " + table.name);
      std::string values;
      for (std::size_t k = 0; k < kept.size(); ++k) {
        if (k) values += ", ";
        values += row[kept[k]];
      }
      script += "INSERT INTO " + quote_ident(table.name) + " VALUES (" + values + ");\n";
    }
  }
  exec_script(db_file, script);
}

DbSpec schools_spec() {
  DbSpec db;
  db.db_id = "california_schools";
  db.tables = {
      {"schools",
       {{"CDSCode", "TEXT", true}, {"MailStreet", "TEXT"}, {"Charter", "INTEGER"}},
       {{"'01'", "'1 Main St'", "1"},
        {"'02'", "'2 Oak Ave'", "0"},
        {"'03'", "'3 Pine Rd'", "1"}}},
      {"frpm",
       {{"CDSCode", "TEXT"}, {"FRPM_Count", "REAL"}, {"School_Type", "TEXT"}},
       {{"'01'", "120.0", "'High Schools'"},
        {"'02'", "85.5", "'Elementary'"},
        {"'03'", "60.25", "'High Schools'"}}},
      {"satscores",
       {{"cds", "TEXT"},
        {"AvgScrMath", "INTEGER"},
        {"NumTstTakr", "INTEGER"},
        {"sname", "TEXT"}},
       {{"'01'", "520", "100", "'Alpha High'"},
        {"'02'", "480", "80", "'Beta Elementary'"},
        {"'03'", "610", "45", "'Gamma High'"}}},
  };
  db.foreign_keys = {{"frpm", "CDSCode", "schools", "CDSCode"},
                     {"satscores", "cds", "schools", "CDSCode"}};
  return db;
}

DbSpec shop_spec() {
  DbSpec db;
  db.db_id = "shop";
  db.tables = {
      {"customers",
       {{"id", "INTEGER", true}, {"name", "TEXT"}, {"email", "TEXT"}, {"city", "TEXT"}},
       {{"1", "'Ada'", "'ada@example.com'", "'Paris'"},
        {"2", "'Bo'", "'bo@example.com'", "'Lyon'"},
        {"3", "'Cy'", "'cy@example.com'", "'Paris'"}}},
      {"products",
       {{"id", "INTEGER", true}, {"name", "TEXT"}, {"price", "REAL"}, {"stock", "INTEGER"}},
       {{"1", "'Pen'", "2.5", "100"},
        {"2", "'Ink'", "12.0", "30"},
        {"3", "'Pad'", "5.0", "0"}}},
      {"orders",
       {{"id", "INTEGER", true},
        {"customer_id", "INTEGER"},
        {"placed_on", "TEXT"},
        {"total", "REAL"}},
       {{"1", "1", "'2024-01-05'", "17.0"},
        {"2", "1", "'2024-02-11'", "2.5"},
        {"3", "2", "'2024-02-12'", "24.0"}}},
      {"order_items",
       {{"id", "INTEGER", true},
        {"order_id", "INTEGER"},
        {"product_id", "INTEGER"},
        {"quantity", "INTEGER"}},
       {{"1", "1", "1", "2"},
        {"2", "1", "2", "1"},
        {"3", "2", "1", "1"},
        {"4", "3", "2", "2"}}},
  };
  db.foreign_keys = {{"orders", "customer_id", "customers", "id"},
                     {"order_items", "order_id", "orders", "id"},
                     {"order_items", "product_id", "products", "id"}};
  return db;
}

DbSpec library_spec() {
  DbSpec db;
  db.db_id = "library";
  db.tables = {
      {"book list",
       {{"Book Id", "INTEGER", true},
        {"Title", "TEXT"},
        {"Publish Year", "INTEGER"},
        {"Shelf", "TEXT"}},
       {{"1", "'Dune'", "1965", "'A1'"},
        {"2", "'Emma'", "1815", "'B2'"},
        {"3", "'Hamlet'", "1603", "'A2'"}}},
      {"loans",
       {{"Loan Id", "INTEGER", true},
        {"Book Id", "INTEGER"},
        {"Member Name", "TEXT"},
        {"Due Date", "TEXT"}},
       {{"1", "1", "'Ada'", "'2024-03-01'"},
        {"2", "3", "'Bo'", "'2024-04-15'"}}},
  };
  db.foreign_keys = {{"loans", "Book Id", "book list", "Book Id"}};
  return db;
}

void write_questions(const fs::path& file, const std::vector<QuestionSpec>& questions) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& q : questions) {
    nlohmann::ordered_json rec;
    rec["question_id"] = q.question_id;
    rec["db_id"] = q.db_id;
    rec["question"] = q.question;
    rec["evidence"] = q.evidence;
    rec["SQL"] = q.sql;
    if (!q.difficulty.empty()) rec["difficulty"] = q.difficulty;
    arr.push_back(std::move(rec));
  }
  write_file(file, arr.dump(2) + "\n");
}

void write_database_tree(const fs::path& root, const std::vector<DbSpec>& specs) {
  for (const auto& spec : specs) {
    fs::path dir = root / spec.db_id;
    fs::create_directories(dir);
    build_db(dir / (spec.db_id + ".sqlite"), spec);
  }
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& file, const std::string& content) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << content;
  if (!out) throw std::runtime_error("write failed on " + file.string());
}

namespace {

std::string shell_quote(const std::string& arg) {
  std::string out = "'";
  for (char c : arg) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  out += "'";
  return out;
}

}  // namespace

CliResult run_cli(const std::vector<std::string>& args) {
  std::string cmd = shell_quote(SQLINK_CLI_PATH);
  for (const auto& arg : args) cmd += " " + shell_quote(arg);
  cmd += " 2>&1";

  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed: " + cmd);
  CliResult result;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) result.output.append(buf, n);
  int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

}  // namespace testsup
