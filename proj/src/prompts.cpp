#include "sqlink/prompts.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "sqlink/error.hpp"
#include "sqlink/linkex.hpp"
#include "sqlink/text.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace sqlink::prompts {

const char* link_mode_name(LinkMode m) {
  switch (m) {
    case LinkMode::non_descriptive: return "non_descriptive";
    case LinkMode::chunked: return "chunked";
    case LinkMode::perfect: return "perfect";
  }
  return "non_descriptive";
}

const char* sql_mode_name(SqlMode m) {
  switch (m) {
    case SqlMode::direct: return "direct";
    case SqlMode::trusting: return "trusting";
    case SqlMode::non_trusting: return "non_trusting";
    case SqlMode::non_trusting_link_only: return "non_trusting_link_only";
  }
  return "direct";
}

std::optional<LinkMode> link_mode_from_string(std::string_view s) {
  if (ci_equal(s, "non_descriptive")) return LinkMode::non_descriptive;
  if (ci_equal(s, "chunked")) return LinkMode::chunked;
  if (ci_equal(s, "perfect")) return LinkMode::perfect;
  return std::nullopt;
}

std::optional<SqlMode> sql_mode_from_string(std::string_view s) {
  if (ci_equal(s, "direct")) return SqlMode::direct;
  if (ci_equal(s, "trusting")) return SqlMode::trusting;
  if (ci_equal(s, "non_trusting")) return SqlMode::non_trusting;
  if (ci_equal(s, "non_trusting_link_only")) return SqlMode::non_trusting_link_only;
  return std::nullopt;
}

std::string variant_name(const PipelineVariant& v) {
  return fmt::format("{}+{}", link_mode_name(v.link_mode), sql_mode_name(v.sql_mode));
}

std::optional<PipelineVariant> variant_from_string(std::string_view s) {
  auto plus = s.find('+');
  if (plus == std::string_view::npos) return std::nullopt;
  auto link = link_mode_from_string(s.substr(0, plus));
  auto sql = sql_mode_from_string(s.substr(plus + 1));
  if (!link || !sql) return std::nullopt;
  return PipelineVariant{*link, *sql};
}

std::string Template::hash() const {
  std::string pinned = text;
  pinned += '\x1f';
  pinned += instruction;
  return fnv1a64_hex(pinned);
}

namespace {

constexpr const char* kLinkLayout =
    "{instruction}\n"
    "\n"
    "Question: {question}\n"
    "\n"
    "Database schema:\n"
    "{schema}\n"
    "\n"
    "Hint: {hint}\n"
    "\n"
    "Schema links:\n";

constexpr const char* kSqlSchemaLayout =
    "{instruction}\n"
    "\n"
    "Question: {question}\n"
    "\n"
    "Database schema:\n"
    "{schema}\n"
    "\n"
    "Hint: {hint}\n"
    "\n"
    "SQL:\n";

constexpr const char* kSqlSchemaLinkLayout =
    "{instruction}\n"
    "\n"
    "Question: {question}\n"
    "\n"
    "Database schema:\n"
    "{schema}\n"
    "\n"
    "Suggested schema links:\n"
    "{link}\n"
    "\n"
    "Hint: {hint}\n"
    "\n"
    "SQL:\n";

constexpr const char* kSqlLinkOnlyLayout =
    "{instruction}\n"
    "\n"
    "Question: {question}\n"
    "\n"
    "Schema links:\n"
    "{link}\n"
    "\n"
    "Hint: {hint}\n"
    "\n"
    "SQL:\n";

constexpr const char* kSqlSuggestedLinkOnlyLayout =
    "{instruction}\n"
    "\n"
    "Question: {question}\n"
    "\n"
    "Suggested schema links:\n"
    "{link}\n"
    "\n"
    "Hint: {hint}\n"
    "\n"
    "SQL:\n";

constexpr const char* kLinkNdInstruction =
    "List every table and column needed to answer the question. Write one table per line as "
    "table(column, ...), followed by one join condition per line as table.column = "
    "table.column.";

constexpr const char* kLinkChunkedInstruction =
    "The schema below is one part of a larger database. List only the tables and columns from "
    "this part that are needed to answer the question, one table per line as table(column, "
    "...), followed by any join conditions between them. If none of them are needed, answer "
    "None.";

constexpr const char* kSqlDirectInstruction =
    "Write one SQLite SELECT statement that answers the question using the database schema.";

constexpr const char* kSqlTrustingInstruction =
    "Write one SQLite SELECT statement that answers the question using only the tables and "
    "columns listed in the schema links.";

constexpr const char* kSqlNonTrustingInstruction =
    "Write one SQLite SELECT statement that answers the question. The suggested schema links "
    "below are a starting point, not a fact; check them against the schema and correct them if "
    "needed.";

constexpr const char* kSqlNonTrustingLinkOnlyInstruction =
    "Write one SQLite SELECT statement that answers the question. The suggested schema links "
    "below are a starting point, not a fact; correct them if they look wrong.";

}  // namespace

const char* const kTemplateFileNames[6] = {
    "link_nd.txt",      "link_chunked.txt",      "sql_direct.txt",
    "sql_trusting.txt", "sql_non_trusting.txt",  "sql_non_trusting_link_only.txt",
};

TemplateSet TemplateSet::defaults() {
  TemplateSet t;
  t.link_nd = {kLinkLayout, kLinkNdInstruction};
  t.link_chunked = {kLinkLayout, kLinkChunkedInstruction};
  t.sql_direct = {kSqlSchemaLayout, kSqlDirectInstruction};
  t.sql_trusting = {kSqlLinkOnlyLayout, kSqlTrustingInstruction};
  t.sql_non_trusting = {kSqlSchemaLinkLayout, kSqlNonTrustingInstruction};
  t.sql_non_trusting_link_only = {kSqlSuggestedLinkOnlyLayout,
                                  kSqlNonTrustingLinkOnlyInstruction};
  return t;
}

const Template& TemplateSet::for_link(LinkMode mode) const {
  switch (mode) {
    case LinkMode::non_descriptive: return link_nd;
    case LinkMode::chunked: return link_chunked;
    case LinkMode::perfect: break;
  }
  throw Error(ErrorKind::config, "perfect link mode does not render link prompts");
}

const Template& TemplateSet::for_sql(SqlMode mode) const {
  switch (mode) {
    case SqlMode::direct: return sql_direct;
    case SqlMode::trusting: return sql_trusting;
    case SqlMode::non_trusting: return sql_non_trusting;
    case SqlMode::non_trusting_link_only: return sql_non_trusting_link_only;
  }
  return sql_direct;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot read '{}'", path.string()));
  std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return out;
}

struct TemplateSlot {
  const char* file;
  Template TemplateSet::* member;
  const char* default_instruction;
};

const TemplateSlot kSlots[6] = {
    {"link_nd.txt", &TemplateSet::link_nd, kLinkNdInstruction},
    {"link_chunked.txt", &TemplateSet::link_chunked, kLinkChunkedInstruction},
    {"sql_direct.txt", &TemplateSet::sql_direct, kSqlDirectInstruction},
    {"sql_trusting.txt", &TemplateSet::sql_trusting, kSqlTrustingInstruction},
    {"sql_non_trusting.txt", &TemplateSet::sql_non_trusting, kSqlNonTrustingInstruction},
    {"sql_non_trusting_link_only.txt", &TemplateSet::sql_non_trusting_link_only,
     kSqlNonTrustingLinkOnlyInstruction},
};

std::string slot_key(const char* file) {
  std::string key = file;
  auto dot = key.rfind('.');
  if (dot != std::string::npos) key.erase(dot);
  return key;
}

}  // namespace

TemplateSet load_templates(const std::string& dir,
                           const std::map<std::string, std::string>& instructions) {
  TemplateSet out;
  for (const auto& slot : kSlots) {
    Template& t = out.*slot.member;
    t.text = read_file(fs::path(dir) / slot.file);
    auto it = instructions.find(slot_key(slot.file));
    t.instruction = it != instructions.end() ? it->second : slot.default_instruction;
  }
  return out;
}

void write_templates(const std::string& dir, const TemplateSet& templates) {
  fs::create_directories(dir);
  for (const auto& slot : kSlots) {
    const Template& t = templates.*slot.member;
    std::ofstream out(fs::path(dir) / slot.file, std::ios::binary);
    if (!out)
      throw Error(ErrorKind::io, fmt::format("cannot write '{}/{}'", dir, slot.file));
    out << t.text;
  }
}

std::string instantiate(const std::string& template_text,
                        const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t start = 0;
  bool first = true;
  while (start <= template_text.size()) {
    std::size_t nl = template_text.find('\n', start);
    bool last = nl == std::string::npos;
    std::string_view line(template_text.data() + start,
                          (last ? template_text.size() : nl) - start);

    std::string built;
    int placeholders = 0;
    int filled = 0;
    std::size_t i = 0;
    while (i < line.size()) {
      if (line[i] == '{') {
        std::size_t close = line.find('}', i + 1);
        if (close != std::string_view::npos) {
          auto it = values.find(std::string(line.substr(i + 1, close - i - 1)));
          if (it != values.end()) {
            ++placeholders;
            if (!it->second.empty()) ++filled;
            built += it->second;
            i = close + 1;
            continue;
          }
        }
      }
      built += line[i];
      ++i;
    }

    // A line whose placeholders all resolved empty disappears, so an absent
    // hint leaves no dangling label.
    if (placeholders == 0 || filled > 0) {
      if (!first) out += '\n';
      out += built;
      first = false;
    }
    if (last) break;
    start = nl + 1;
  }
  return out;
}

namespace {

std::map<std::string, std::string> base_values(const Template& tpl, const Example& example) {
  return {
      {"instruction", tpl.instruction},
      {"question", example.question},
      {"hint", example.evidence},
  };
}

}  // namespace

RenderedPrompt build_link_prompt_nd(const DatabaseSchema& schema, const Example& example,
                                    const chunker::TokenBudget& budget,
                                    const TemplateSet& templates) {
  const Template& tpl = templates.link_nd;
  auto values = base_values(tpl, example);

  auto compose = [&](const chunker::SchemaRendering& r) {
    auto v = values;
    v["schema"] = chunker::render(r);
    return instantiate(tpl.text, v);
  };

  chunker::SchemaRendering rendering = chunker::make_rendering(schema);
  auto shed = chunker::shed_descriptions(rendering, budget, [&](const auto& r) {
    return chunker::count_tokens(compose(r), budget);
  });
  if (!shed.fits) {
    int need = chunker::count_tokens(compose(rendering), budget);
    throw Error(ErrorKind::budget,
                fmt::format("schema of '{}' still needs {} tokens with all descriptions shed "
                            "(budget {})",
                            schema.db_id, need, budget.max_tokens));
  }

  RenderedPrompt out;
  out.question_id = example.question_id;
  out.variant.link_mode = LinkMode::non_descriptive;
  out.stage = Stage::link;
  out.text = compose(rendering);
  out.token_count = chunker::count_tokens(out.text, budget);
  for (const auto& table : schema.tables) out.chunk_tables.push_back(table.name);
  out.template_hash = tpl.hash();
  out.shed = std::move(shed.dropped);
  return out;
}

std::vector<RenderedPrompt> build_link_prompts_chunked(const DatabaseSchema& schema,
                                                       const Example& example,
                                                       const chunker::TokenBudget& budget,
                                                       const TemplateSet& templates) {
  const Template& tpl = templates.link_chunked;
  auto values = base_values(tpl, example);

  auto chunks = chunker::chunk_schema(
      schema,
      [&](const chunker::SchemaRendering& r) {
        auto v = values;
        v["schema"] = chunker::render(r);
        return instantiate(tpl.text, v);
      },
      budget);

  std::vector<RenderedPrompt> out;
  out.reserve(chunks.size());
  for (auto& chunk : chunks) {
    RenderedPrompt p;
    p.question_id = example.question_id;
    p.variant.link_mode = LinkMode::chunked;
    p.stage = Stage::link;
    p.text = std::move(chunk.text);
    p.token_count = chunk.token_count;
    p.chunk_index = chunk.index;
    p.chunk_total = chunk.total;
    p.chunk_tables = std::move(chunk.included_tables);
    p.template_hash = tpl.hash();
    p.shed = std::move(chunk.shed);
    out.push_back(std::move(p));
  }
  return out;
}

RenderedPrompt build_sql_prompt(const PipelineVariant& variant, const DatabaseSchema& schema,
                                const SchemaLink& link, const Example& example,
                                const chunker::TokenBudget& budget,
                                const TemplateSet& templates) {
  const Template& tpl = templates.for_sql(variant.sql_mode);
  auto values = base_values(tpl, example);

  const bool wants_schema =
      variant.sql_mode == SqlMode::direct || variant.sql_mode == SqlMode::non_trusting;
  const bool wants_link = variant.sql_mode != SqlMode::direct;

  values["link"] = wants_link ? linkex::serialize_link(link) : std::string{};
  values["schema"] = "";

  RenderedPrompt out;
  out.question_id = example.question_id;
  out.variant = variant;
  out.stage = Stage::sql;
  out.template_hash = tpl.hash();

  if (wants_schema) {
    auto compose = [&](const chunker::SchemaRendering& r) {
      auto v = values;
      v["schema"] = chunker::render(r);
      return instantiate(tpl.text, v);
    };
    chunker::SchemaRendering rendering = chunker::make_rendering(schema);
    auto shed = chunker::shed_descriptions(rendering, budget, [&](const auto& r) {
      return chunker::count_tokens(compose(r), budget);
    });
    if (!shed.fits) {
      int need = chunker::count_tokens(compose(rendering), budget);
      throw Error(ErrorKind::budget,
                  fmt::format("sql prompt for question {} needs {} tokens with all "
                              "descriptions shed (budget {})",
                              example.question_id, need, budget.max_tokens));
    }
    out.text = compose(rendering);
    out.shed = std::move(shed.dropped);
    for (const auto& table : schema.tables) out.chunk_tables.push_back(table.name);
  } else {
    out.text = instantiate(tpl.text, values);
    int need = chunker::count_tokens(out.text, budget);
    if (need > budget.max_tokens)
      throw Error(ErrorKind::budget,
                  fmt::format("sql prompt for question {} needs {} tokens, budget is {} and "
                              "nothing can be shed",
                              example.question_id, need, budget.max_tokens));
    out.chunk_tables = link.tables();
  }
  out.token_count = chunker::count_tokens(out.text, budget);
  return out;
}

namespace {

const SchemaLink* find_link(const std::map<long long, SchemaLink>& links, long long qid) {
  auto it = links.find(qid);
  return it == links.end() ? nullptr : &it->second;
}

}  // namespace

SftReport export_sft(const std::vector<Example>& examples, const corpus::SchemaStore& store,
                     const std::map<long long, SchemaLink>& gold_links,
                     const std::map<long long, SchemaLink>* predicted_links,
                     const TemplateSet& templates, const SftOptions& opts) {
  if (opts.stage == Stage::link && opts.variant.link_mode == LinkMode::perfect)
    throw Error(ErrorKind::config,
                "perfect link mode has no link stage to train; nothing to export");
  const bool non_trusting_sql = opts.stage == Stage::sql &&
                                (opts.variant.sql_mode == SqlMode::non_trusting ||
                                 opts.variant.sql_mode == SqlMode::non_trusting_link_only);
  if (non_trusting_sql && !predicted_links)
    throw Error(ErrorKind::config,
                "non-trusting sql export trains against predicted links; none were supplied");
  if (opts.train_fraction < 0.0 || opts.train_fraction > 1.0)
    throw Error(ErrorKind::config, "train_fraction must be in [0, 1]");

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937 rng(static_cast<std::mt19937::result_type>(opts.seed));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t train_count =
      static_cast<std::size_t>(opts.train_fraction * static_cast<double>(examples.size()));

  std::ofstream train_out(opts.out_prefix + "_train.jsonl", std::ios::binary);
  std::ofstream val_out(opts.out_prefix + "_val.jsonl", std::ios::binary);
  if (!train_out || !val_out)
    throw Error(ErrorKind::io,
                fmt::format("cannot write sft files with prefix '{}'", opts.out_prefix));

  SftReport report;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const Example& example = examples[order[pos]];
    const bool is_train = pos < train_count;
    (is_train ? report.train_examples : report.val_examples) += 1;

    try {
      const DatabaseSchema* schema = store.find(example.db_id);
      if (!schema) throw Error(ErrorKind::config, fmt::format("no schema for db '{}'",
                                                              example.db_id));

      struct Record {
        std::optional<int> chunk_index;
        std::string prompt;
        std::string completion;
        std::string template_hash;
      };
      std::vector<Record> records;

      if (opts.stage == Stage::link) {
        const SchemaLink* gold = find_link(gold_links, example.question_id);
        if (!gold)
          throw Error(ErrorKind::config,
                      fmt::format("no gold link for question {}", example.question_id));
        if (opts.variant.link_mode == LinkMode::non_descriptive) {
          auto prompt = build_link_prompt_nd(*schema, example, opts.link_budget, templates);
          records.push_back({std::nullopt, std::move(prompt.text),
                             linkex::serialize_link(*gold), prompt.template_hash});
        } else {
          auto prompts = build_link_prompts_chunked(*schema, example, opts.link_budget,
                                                    templates);
          for (auto& prompt : prompts) {
            SchemaLink part = restrict_link(*gold, prompt.chunk_tables);
            records.push_back({prompt.chunk_index, std::move(prompt.text),
                               linkex::serialize_link(part), prompt.template_hash});
          }
        }
      } else {
        SchemaLink link;
        if (opts.variant.sql_mode != SqlMode::direct) {
          const auto& source = non_trusting_sql ? *predicted_links : gold_links;
          const SchemaLink* found = find_link(source, example.question_id);
          if (!found)
            throw Error(ErrorKind::config,
                        fmt::format("no {} link for question {}",
                                    non_trusting_sql ? "predicted" : "gold",
                                    example.question_id));
          link = *found;
        }
        auto prompt = build_sql_prompt(opts.variant, *schema, link, example, opts.sql_budget,
                                       templates);
        records.push_back({std::nullopt, std::move(prompt.text), example.gold_sql,
                           prompt.template_hash});
      }

      std::ofstream& sink = is_train ? train_out : val_out;
      for (auto& record : records) {
        ordered_json j;
        j["question_id"] = example.question_id;
        if (record.chunk_index) j["chunk_index"] = *record.chunk_index;
        j["prompt"] = std::move(record.prompt);
        j["completion"] = std::move(record.completion);
        j["template_hash"] = record.template_hash;
        j["variant"] = variant_name(opts.variant);
        j["stage"] = stage_name(opts.stage);
        sink << j.dump() << '\n';
        (is_train ? report.train_records : report.val_records) += 1;
      }
    } catch (const Error& e) {
      report.skipped.push_back(fmt::format("{}: {}", example.question_id, e.what()));
    }
  }
  return report;
}

}  // namespace sqlink::prompts
