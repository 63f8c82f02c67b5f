#include "sqlink/chunker.hpp"

#include <cstdio>
#include <cstdlib>
#include <set>
#include <unistd.h>

#include <fmt/format.h>

#include "sqlink/error.hpp"
#include "sqlink/text.hpp"

namespace sqlink::chunker {

namespace {

int run_external_counter(const std::string& text, const std::string& command) {
  if (command.empty())
    throw Error(ErrorKind::config, "external tokenizer selected but no command configured");
  char path[] = "/tmp/sqlink_tok_XXXXXX";
  int fd = ::mkstemp(path);
  if (fd < 0) throw Error(ErrorKind::tooling, "cannot create temp file for tokenizer input");
  FILE* tmp = ::fdopen(fd, "wb");
  if (!tmp) {
    ::close(fd);
    ::unlink(path);
    throw Error(ErrorKind::tooling, "cannot open temp file for tokenizer input");
  }
  std::fwrite(text.data(), 1, text.size(), tmp);
  std::fclose(tmp);

  std::string cmd = command + " < " + path;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) {
    ::unlink(path);
    throw Error(ErrorKind::tooling, fmt::format("cannot run tokenizer command '{}'", command));
  }
  std::string out;
  char buf[256];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  int rc = ::pclose(pipe);
  ::unlink(path);
  if (rc != 0)
    throw Error(ErrorKind::tooling,
                fmt::format("tokenizer command '{}' exited with status {}", command, rc));
  const std::string trimmed{trim(out)};
  if (trimmed.empty())
    throw Error(ErrorKind::tooling,
                fmt::format("tokenizer command '{}' produced no output", command));
  try {
    size_t pos = 0;
    int n = std::stoi(trimmed, &pos);
    if (pos != trimmed.size() || n < 0) throw std::invalid_argument("tail");
    return n;
  } catch (const std::exception&) {
    throw Error(ErrorKind::tooling,
                fmt::format("tokenizer command '{}' printed '{}', expected a count", command,
                            trimmed));
  }
}

}  // namespace

int count_tokens(const std::string& text, const TokenBudget& budget) {
  if (budget.tokenizer == TokenizerId::external)
    return run_external_counter(text, budget.external_command);
  if (text.empty()) return 0;
  return static_cast<int>((text.size() + 3) / 4);
}

namespace {

TableRendering render_table_def(const TableDef& table) {
  TableRendering out;
  out.name = table.name;
  out.columns.reserve(table.columns.size());
  for (const auto& col : table.columns) {
    ColumnRendering c;
    c.name = col.name;
    c.sql_type = col.sql_type;
    c.is_primary_key = col.is_primary_key;
    c.description = col.description;
    c.value_description = col.value_description;
    out.columns.push_back(std::move(c));
  }
  return out;
}

// Recomputes FK lines and cross-boundary notes for the given set of parts.
SchemaRendering assemble(const DatabaseSchema& schema, std::vector<TableRendering> parts) {
  std::set<std::string, CiLess> present;
  for (const auto& part : parts) present.insert(part.name);

  SchemaRendering out;
  for (const auto& fk : schema.foreign_keys)
    if (present.count(fk.from_table) && present.count(fk.to_table)) out.fk_lines.push_back(fk);

  for (auto& part : parts) {
    part.related_tables.clear();
    std::set<std::string, CiLess> seen;
    for (const auto& fk : schema.foreign_keys) {
      if (!ci_equal(fk.from_table, part.name)) continue;
      if (present.count(fk.to_table)) continue;
      if (seen.insert(fk.to_table).second) part.related_tables.push_back(fk.to_table);
    }
  }
  out.tables = std::move(parts);
  return out;
}

}  // namespace

SchemaRendering make_rendering(const DatabaseSchema& schema) {
  std::vector<TableRendering> parts;
  parts.reserve(schema.tables.size());
  for (const auto& table : schema.tables) parts.push_back(render_table_def(table));
  return assemble(schema, std::move(parts));
}

SchemaRendering make_rendering(const DatabaseSchema& schema,
                               const std::vector<std::string>& tables) {
  std::vector<TableRendering> parts;
  parts.reserve(tables.size());
  for (const auto& name : tables) {
    const TableDef* table = schema.find_table(name);
    if (!table)
      throw Error(ErrorKind::validation, fmt::format("unknown table '{}' in rendering", name));
    parts.push_back(render_table_def(*table));
  }
  return assemble(schema, std::move(parts));
}

std::string render(const SchemaRendering& rendering) {
  std::string out;
  for (const auto& table : rendering.tables) {
    if (!out.empty()) out += "\n";
    out += fmt::format("Table: {}{}\n", table.name, table.continuation ? " (continued)" : "");
    for (const auto& col : table.columns) {
      out += fmt::format("  {} ({}{})", col.name, col.sql_type.empty() ? "any" : col.sql_type,
                         col.is_primary_key ? ", primary key" : "");
      if (col.description && !col.description->empty())
        out += fmt::format(" -- {}", single_line(*col.description));
      if (col.value_description && !col.value_description->empty())
        out += fmt::format(" Values: {}", single_line(*col.value_description));
      out += "\n";
    }
    for (const auto& related : table.related_tables)
      out += fmt::format("  Related table: {}\n", related);
  }
  if (!rendering.fk_lines.empty()) {
    if (!out.empty()) out += "\n";
    out += "Foreign keys:\n";
    for (const auto& fk : rendering.fk_lines)
      out += fmt::format("  {}.{} = {}.{}\n", fk.from_table, fk.from_column, fk.to_table,
                         fk.to_column);
  }
  return out;
}

ShedReport shed_descriptions(SchemaRendering& rendering, const TokenBudget& budget,
                             const MeasureFn& measure) {
  MeasureFn fn = measure;
  if (!fn) fn = [&budget](const SchemaRendering& r) { return count_tokens(render(r), budget); };

  ShedReport report;
  if (fn(rendering) <= budget.max_tokens) {
    report.fits = true;
    return report;
  }

  // Two passes: value descriptions, then descriptions; within each pass the
  // last table loses its lines first.
  for (int pass = 0; pass < 2; ++pass) {
    for (auto table = rendering.tables.rbegin(); table != rendering.tables.rend(); ++table) {
      for (auto col = table->columns.rbegin(); col != table->columns.rend(); ++col) {
        auto& slot = pass == 0 ? col->value_description : col->description;
        if (!slot || slot->empty()) continue;
        slot.reset();
        report.dropped.push_back(fmt::format("{}.{}: {}", table->name, col->name,
                                             pass == 0 ? "value description" : "description"));
        if (fn(rendering) <= budget.max_tokens) {
          report.fits = true;
          return report;
        }
      }
    }
  }
  return report;
}

namespace {

struct OpenChunk {
  std::vector<TableRendering> parts;
  std::vector<std::string> split_tables;
  std::vector<std::string> shed;
};

PromptChunk close_chunk(const DatabaseSchema& schema, const ScaffoldFn& scaffold,
                        const TokenBudget& budget, OpenChunk&& open) {
  SchemaRendering rendering = assemble(schema, open.parts);
  PromptChunk chunk;
  chunk.text = scaffold(rendering);
  chunk.token_count = count_tokens(chunk.text, budget);
  for (const auto& part : rendering.tables)
    if (chunk.included_tables.empty() || !ci_equal(chunk.included_tables.back(), part.name))
      chunk.included_tables.push_back(part.name);
  chunk.split_tables = std::move(open.split_tables);
  chunk.shed = std::move(open.shed);
  return chunk;
}

int measure_parts(const DatabaseSchema& schema, const ScaffoldFn& scaffold,
                  const TokenBudget& budget, const std::vector<TableRendering>& parts) {
  return count_tokens(scaffold(assemble(schema, parts)), budget);
}

}  // namespace

std::vector<PromptChunk> chunk_schema(const DatabaseSchema& schema, const ScaffoldFn& scaffold,
                                      const TokenBudget& budget) {
  if (!scaffold) throw Error(ErrorKind::config, "chunk_schema needs a scaffold function");
  const int scaffold_tokens = measure_parts(schema, scaffold, budget, {});
  if (scaffold_tokens > budget.max_tokens)
    throw Error(ErrorKind::budget,
                fmt::format("prompt scaffold alone needs {} tokens, budget is {}",
                            scaffold_tokens, budget.max_tokens));

  std::vector<PromptChunk> chunks;
  OpenChunk cur;

  auto flush = [&] {
    if (cur.parts.empty()) return;
    chunks.push_back(close_chunk(schema, scaffold, budget, std::move(cur)));
    cur = OpenChunk{};
  };

  for (const auto& table : schema.tables) {
    TableRendering whole = render_table_def(table);

    auto with = cur.parts;
    with.push_back(whole);
    if (measure_parts(schema, scaffold, budget, with) <= budget.max_tokens) {
      cur.parts.push_back(std::move(whole));
      continue;
    }

    flush();

    std::vector<TableRendering> alone{whole};
    if (measure_parts(schema, scaffold, budget, alone) <= budget.max_tokens) {
      cur.parts.push_back(std::move(whole));
      continue;
    }

    // Oversized on its own: shed this table's descriptions first.
    SchemaRendering solo = assemble(schema, {whole});
    auto shed = shed_descriptions(solo, budget, [&](const SchemaRendering& r) {
      return count_tokens(scaffold(r), budget);
    });
    if (shed.fits) {
      cur.parts.push_back(solo.tables.front());
      cur.shed.insert(cur.shed.end(), shed.dropped.begin(), shed.dropped.end());
      continue;
    }

    // Last resort: split the stripped table by columns. Earlier parts close
    // immediately; the final part stays open so later tables can pack in.
    const TableRendering stripped = solo.tables.front();
    std::vector<std::string> shed_lines = shed.dropped;
    size_t next_col = 0;
    bool first_part = true;
    while (next_col < stripped.columns.size()) {
      TableRendering part;
      part.name = stripped.name;
      part.continuation = !first_part;
      size_t taken = 0;
      while (next_col + taken < stripped.columns.size()) {
        part.columns.push_back(stripped.columns[next_col + taken]);
        if (measure_parts(schema, scaffold, budget, {part}) > budget.max_tokens) {
          part.columns.pop_back();
          break;
        }
        ++taken;
      }
      if (taken == 0)
        throw Error(ErrorKind::budget,
                    fmt::format("column '{}.{}' does not fit in a {}-token chunk by itself",
                                stripped.name, stripped.columns[next_col].name,
                                budget.max_tokens));
      next_col += taken;
      cur.parts.push_back(std::move(part));
      cur.split_tables.push_back(stripped.name);
      if (first_part) {
        cur.shed.insert(cur.shed.end(), shed_lines.begin(), shed_lines.end());
        first_part = false;
      }
      if (next_col < stripped.columns.size()) flush();
    }
  }
  flush();

  const int total = static_cast<int>(chunks.size());
  for (int i = 0; i < total; ++i) {
    chunks[i].index = i;
    chunks[i].total = total;
  }
  return chunks;
}

}  // namespace sqlink::chunker
