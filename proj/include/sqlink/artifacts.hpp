#pragma once

#include <functional>
#include <map>
#include <string>

#include <json.hpp>

#include "sqlink/postproc.hpp"
#include "sqlink/types.hpp"

namespace sqlink::artifacts {

using ordered_json = nlohmann::ordered_json;

// Structured payload: {"columns": [[table, column], ...],
// "foreign_keys": [[from_table, from_column, to_table, to_column], ...]}.
ordered_json link_to_json(const SchemaLink& link);
SchemaLink link_from_json(const ordered_json& j);

// One JSON object per line. The callback gets the parsed object and the
// 1-based line number; blank lines are skipped; bad JSON throws Error(parse).
void for_each_jsonl(const std::string& path,
                    const std::function<void(const ordered_json&, std::size_t)>& fn);

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path);
  ~JsonlWriter();
  JsonlWriter(const JsonlWriter&) = delete;
  JsonlWriter& operator=(const JsonlWriter&) = delete;

  void write(const ordered_json& record);
  std::size_t count() const { return count_; }

 private:
  std::string path_;
  void* out_;  // std::ofstream, kept out of the header
  std::size_t count_ = 0;
};

// Reads a gold-link or merged-link file: {question_id, ..., columns,
// foreign_keys}. Later duplicates of a question_id win.
std::map<long long, SchemaLink> load_links_jsonl(const std::string& path);

// Predictions for evaluation: {question_id, sql, extraction, ...}.
std::vector<postproc::CleanedSql> load_predictions_jsonl(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace sqlink::artifacts
