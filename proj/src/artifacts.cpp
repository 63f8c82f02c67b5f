#include "sqlink/artifacts.hpp"

#include <fstream>

#include <fmt/format.h>

#include "sqlink/error.hpp"
#include "sqlink/text.hpp"

namespace sqlink::artifacts {

ordered_json link_to_json(const SchemaLink& link) {
  ordered_json columns = ordered_json::array();
  for (const auto& ref : link.columns)
    columns.push_back(ordered_json::array({ref.table, ref.column}));
  ordered_json fks = ordered_json::array();
  for (const auto& fk : link.foreign_keys)
    fks.push_back(ordered_json::array({fk.from_table, fk.from_column, fk.to_table,
                                       fk.to_column}));
  return ordered_json{{"columns", std::move(columns)}, {"foreign_keys", std::move(fks)}};
}

SchemaLink link_from_json(const ordered_json& j) {
  SchemaLink link;
  for (const auto& pair : j.at("columns")) {
    if (!pair.is_array() || pair.size() != 2)
      throw Error(ErrorKind::parse, "link columns must be [table, column] pairs");
    link.add(ColumnRef{pair[0].get<std::string>(), pair[1].get<std::string>()});
  }
  for (const auto& quad : j.at("foreign_keys")) {
    if (!quad.is_array() || quad.size() != 4)
      throw Error(ErrorKind::parse,
                  "link foreign_keys must be [from_table, from_column, to_table, to_column]");
    link.add(ForeignKey{quad[0].get<std::string>(), quad[1].get<std::string>(),
                        quad[2].get<std::string>(), quad[3].get<std::string>()});
  }
  return link;
}

void for_each_jsonl(const std::string& path,
                    const std::function<void(const ordered_json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot read '{}'", path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::parse, fmt::format("{} line {}: {}", path, lineno, e.what()));
    }
    fn(j, lineno);
  }
}

JsonlWriter::JsonlWriter(const std::string& path) : path_(path) {
  auto* out = new std::ofstream(path, std::ios::binary);
  if (!*out) {
    delete out;
    throw Error(ErrorKind::io, fmt::format("cannot write '{}'", path));
  }
  out_ = out;
}

JsonlWriter::~JsonlWriter() { delete static_cast<std::ofstream*>(out_); }

void JsonlWriter::write(const ordered_json& record) {
  auto& out = *static_cast<std::ofstream*>(out_);
  out << record.dump() << '\n';
  if (!out) throw Error(ErrorKind::io, fmt::format("write failed on '{}'", path_));
  ++count_;
}

std::map<long long, SchemaLink> load_links_jsonl(const std::string& path) {
  std::map<long long, SchemaLink> out;
  for_each_jsonl(path, [&](const ordered_json& j, std::size_t lineno) {
    if (!j.contains("question_id"))
      throw Error(ErrorKind::parse,
                  fmt::format("{} line {}: missing question_id", path, lineno));
    out[j.at("question_id").get<long long>()] = link_from_json(j);
  });
  return out;
}

std::vector<postproc::CleanedSql> load_predictions_jsonl(const std::string& path) {
  std::vector<postproc::CleanedSql> out;
  for_each_jsonl(path, [&](const ordered_json& j, std::size_t lineno) {
    postproc::CleanedSql p;
    if (!j.contains("question_id") || !j.contains("sql") || !j.contains("extraction"))
      throw Error(ErrorKind::parse,
                  fmt::format("{} line {}: need question_id, sql, extraction", path, lineno));
    p.question_id = j.at("question_id").get<long long>();
    p.sql = j.at("sql").get<std::string>();
    auto extraction = postproc::extraction_from_string(j.at("extraction").get<std::string>());
    if (!extraction)
      throw Error(ErrorKind::parse,
                  fmt::format("{} line {}: unknown extraction '{}'", path, lineno,
                              j.at("extraction").get<std::string>()));
    p.extraction = *extraction;
    out.push_back(std::move(p));
  });
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot read '{}'", path));
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", path));
  out << content;
  if (!out) throw Error(ErrorKind::io, fmt::format("write failed on '{}'", path));
}

}  // namespace sqlink::artifacts
