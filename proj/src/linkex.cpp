#include "sqlink/linkex.hpp"

#include <algorithm>
#include <memory>
#include <set>

#include <fmt/format.h>

#include "sqlink/error.hpp"
#include "sqlink/sql_parser.hpp"
#include "sqlink/text.hpp"

namespace sqlink::linkex {

namespace {

using sql::ColumnRefExpr;
using sql::Expr;
using sql::FromItem;
using sql::SelectCore;
using sql::SelectStmt;

// What clause a reference appears in; drives alias-vs-column precedence.
enum class Clause { general, group_or_having, order_by };

class Extractor {
 public:
  explicit Extractor(const DatabaseSchema& schema) : schema_(schema) {}

  SchemaLink run(const SelectStmt& stmt) {
    cte_frames_.emplace_back();
    walk_statement(stmt);
    cte_frames_.pop_back();

    SchemaLink link;
    // Tables sorted case-insensitively, columns in catalog order.
    std::vector<std::size_t> table_order;
    for (const auto& [table_idx, _] : hits_) {
      if (table_order.empty() || table_order.back() != table_idx)
        table_order.push_back(table_idx);
    }
    std::sort(table_order.begin(), table_order.end(),
              [&](std::size_t a, std::size_t b) {
                return ci_less(schema_.tables[a].name, schema_.tables[b].name);
              });
    for (std::size_t table_idx : table_order) {
      const TableDef& table = schema_.tables[table_idx];
      for (std::size_t col_idx = 0; col_idx < table.columns.size(); ++col_idx) {
        if (hits_.count({table_idx, col_idx}))
          link.add(ColumnRef{table.name, table.columns[col_idx].name});
      }
    }
    for (const auto& fk : schema_.foreign_keys) {
      if (link.contains_table(fk.from_table) && link.contains_table(fk.to_table))
        link.add(fk);
    }
    return link;
  }

 private:
  // Output column set of a derived table (subquery or CTE).
  struct Derived {
    std::vector<std::string> outputs;

    bool has(std::string_view name) const {
      for (const auto& out : outputs) {
        if (ci_equal(out, name)) return true;
      }
      return false;
    }
  };
  using DerivedPtr = std::shared_ptr<Derived>;

  struct ScopeItem {
    std::string label;  // alias, or table/CTE name when no alias given
    std::size_t table_idx = npos;  // base table index, or npos for derived
    DerivedPtr derived;

    bool exposes(const DatabaseSchema& schema, std::string_view column) const {
      if (derived) return derived->has(column);
      return schema.tables[table_idx].find_column(column) != nullptr;
    }
  };

  struct Scope {
    std::vector<ScopeItem> items;
    std::vector<std::string> select_aliases;
    std::vector<std::string> using_columns;
  };

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t table_index(std::string_view name) const {
    for (std::size_t i = 0; i < schema_.tables.size(); ++i) {
      if (ci_equal(schema_.tables[i].name, name)) return i;
    }
    return npos;
  }

  const DerivedPtr* find_cte(std::string_view name) const {
    for (auto frame = cte_frames_.rbegin(); frame != cte_frames_.rend(); ++frame) {
      auto it = frame->find(std::string(name));
      if (it != frame->end()) return &it->second;
    }
    return nullptr;
  }

  // Walks one statement and returns its output column names.
  Derived walk_statement(const SelectStmt& stmt) {
    cte_frames_.emplace_back();
    for (const auto& cte : stmt.ctes) {
      Derived body = walk_statement(*cte.body);
      auto derived = std::make_shared<Derived>();
      derived->outputs = cte.column_names.empty() ? body.outputs : cte.column_names;
      cte_frames_.back()[to_lower(cte.name)] = std::move(derived);
    }

    Derived outputs;
    for (std::size_t i = 0; i < stmt.cores.size(); ++i) {
      Derived core_outputs = walk_core(stmt.cores[i], stmt, i == 0);
      if (i == 0) outputs = std::move(core_outputs);
    }
    cte_frames_.pop_back();
    return outputs;
  }

  Derived walk_core(const SelectCore& core, const SelectStmt& stmt,
                    bool resolves_statement_tail) {
    Scope scope;
    for (const auto& from : core.from) {
      ScopeItem item;
      if (from.subquery) {
        Derived sub = walk_statement(*from.subquery);
        item.derived = std::make_shared<Derived>(std::move(sub));
        item.label = from.alias;
      } else if (const DerivedPtr* cte = find_cte(from.table)) {
        item.derived = *cte;
        item.label = from.alias.empty() ? from.table : from.alias;
      } else {
        std::size_t idx = table_index(from.table);
        if (idx == npos)
          throw Error(ErrorKind::validation,
                      fmt::format("unknown table '{}' in schema '{}'",
                                  from.table, schema_.db_id));
        item.table_idx = idx;
        item.label = from.alias.empty() ? from.table : from.alias;
      }
      for (const auto& col : from.using_columns) scope.using_columns.push_back(col);
      scope.items.push_back(std::move(item));
    }

    scopes_.push_back(std::move(scope));
    Scope& current = scopes_.back();

    // Select list: attribute expressions, expand stars, collect outputs.
    Derived outputs;
    for (const auto& item : core.items) {
      if (item.star) {
        expand_star(item.star_qualifier, current, outputs);
        continue;
      }
      resolve_expr(*item.expr, Clause::general);
      std::string name = item.alias;
      if (name.empty()) {
        if (const auto* ref = std::get_if<ColumnRefExpr>(&item.expr->node))
          name = ref->column;
      }
      outputs.outputs.push_back(name);
      if (!item.alias.empty()) current.select_aliases.push_back(item.alias);
    }

    // USING columns reference both sides of their join.
    for (const auto& col : current.using_columns) {
      for (const auto& item : current.items) {
        if (item.table_idx != npos &&
            schema_.tables[item.table_idx].find_column(col))
          record_hit(item, col);
      }
    }

    for (const auto& from : core.from) {
      if (from.on) resolve_expr(*from.on, Clause::general);
    }
    if (core.where) resolve_expr(*core.where, Clause::general);
    for (const auto& g : core.group_by) resolve_expr(*g, Clause::group_or_having);
    if (core.having) resolve_expr(*core.having, Clause::group_or_having);

    if (resolves_statement_tail) {
      for (const auto& item : stmt.order_by)
        resolve_expr(*item.expr, Clause::order_by);
      if (stmt.limit) resolve_expr(*stmt.limit, Clause::general);
      if (stmt.offset) resolve_expr(*stmt.offset, Clause::general);
    }

    scopes_.pop_back();
    return outputs;
  }

  void expand_star(const std::string& qualifier, const Scope& scope,
                   Derived& outputs) {
    auto expand_item = [&](const ScopeItem& item) {
      if (item.table_idx != npos) {
        const TableDef& table = schema_.tables[item.table_idx];
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
          hits_.insert({item.table_idx, c});
          outputs.outputs.push_back(table.columns[c].name);
        }
      } else if (item.derived) {
        for (const auto& name : item.derived->outputs)
          outputs.outputs.push_back(name);
      }
    };
    if (qualifier.empty()) {
      for (const auto& item : scope.items) expand_item(item);
      return;
    }
    for (const auto& item : scope.items) {
      if (ci_equal(item.label, qualifier)) {
        expand_item(item);
        return;
      }
    }
    throw Error(ErrorKind::validation,
                fmt::format("unknown table or alias '{}' before '.*'", qualifier));
  }

  void record_hit(const ScopeItem& item, std::string_view column) {
    std::size_t col_idx = schema_.tables[item.table_idx].column_index(column);
    if (col_idx != npos) hits_.insert({item.table_idx, col_idx});
  }

  void resolve_expr(const Expr& expr, Clause clause) {
    if (const auto* ref = std::get_if<ColumnRefExpr>(&expr.node)) {
      resolve_column(*ref, clause);
      return;
    }
    if (const auto* sub = std::get_if<sql::SubqueryExpr>(&expr.node)) {
      walk_statement(*sub->subquery);
      return;
    }
    if (const auto* exists = std::get_if<sql::ExistsExpr>(&expr.node)) {
      walk_statement(*exists->subquery);
      return;
    }
    if (const auto* in = std::get_if<sql::InExpr>(&expr.node)) {
      resolve_expr(*in->value, clause);
      for (const auto& item : in->list) resolve_expr(*item, clause);
      if (in->subquery) walk_statement(*in->subquery);
      return;
    }
    std::visit(
        [&](const auto& node) {
          using T = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<T, sql::FuncCallExpr>) {
            for (const auto& arg : node.args) resolve_expr(*arg, clause);
          } else if constexpr (std::is_same_v<T, sql::UnaryExpr>) {
            resolve_expr(*node.operand, clause);
          } else if constexpr (std::is_same_v<T, sql::BinaryExpr>) {
            resolve_expr(*node.lhs, clause);
            resolve_expr(*node.rhs, clause);
          } else if constexpr (std::is_same_v<T, sql::BetweenExpr>) {
            resolve_expr(*node.value, clause);
            resolve_expr(*node.low, clause);
            resolve_expr(*node.high, clause);
          } else if constexpr (std::is_same_v<T, sql::CaseExpr>) {
            if (node.operand) resolve_expr(*node.operand, clause);
            for (const auto& [when_expr, then_expr] : node.whens) {
              resolve_expr(*when_expr, clause);
              resolve_expr(*then_expr, clause);
            }
            if (node.else_expr) resolve_expr(*node.else_expr, clause);
          } else if constexpr (std::is_same_v<T, sql::CastExpr>) {
            resolve_expr(*node.operand, clause);
          } else if constexpr (std::is_same_v<T, sql::IsNullExpr>) {
            resolve_expr(*node.operand, clause);
          }
          // Literals carry no references.
        },
        expr.node);
  }

  bool is_select_alias(const Scope& scope, std::string_view name) const {
    for (const auto& alias : scope.select_aliases) {
      if (ci_equal(alias, name)) return true;
    }
    return false;
  }

  void resolve_column(const ColumnRefExpr& ref, Clause clause) {
    if (!ref.qualifier.empty()) {
      // Alias- or table-qualified: search scopes inside out.
      for (auto scope = scopes_.rbegin(); scope != scopes_.rend(); ++scope) {
        for (const auto& item : scope->items) {
          if (!ci_equal(item.label, ref.qualifier)) continue;
          if (item.table_idx != npos) {
            if (!schema_.tables[item.table_idx].find_column(ref.column))
              throw Error(ErrorKind::validation,
                          fmt::format("unknown column '{}.{}' at offset {}",
                                      ref.qualifier, ref.column, ref.offset));
            record_hit(item, ref.column);
            return;
          }
          if (!item.derived->has(ref.column))
            throw Error(ErrorKind::validation,
                        fmt::format("unknown column '{}.{}' at offset {}",
                                    ref.qualifier, ref.column, ref.offset));
          return;  // derived outputs are attributed where they are defined
        }
      }
      throw Error(ErrorKind::validation,
                  fmt::format("unknown table or alias '{}' at offset {}",
                              ref.qualifier, ref.offset));
    }

    // ORDER BY prefers output aliases over source columns.
    if (clause == Clause::order_by && !scopes_.empty() &&
        is_select_alias(scopes_.back(), ref.column))
      return;

    for (auto scope = scopes_.rbegin(); scope != scopes_.rend(); ++scope) {
      // Columns merged by USING resolve to the leftmost table that has them.
      for (const auto& using_col : scope->using_columns) {
        if (ci_equal(using_col, ref.column)) {
          for (const auto& item : scope->items) {
            if (item.exposes(schema_, ref.column)) {
              if (item.table_idx != npos) record_hit(item, ref.column);
              return;
            }
          }
        }
      }
      std::vector<const ScopeItem*> candidates;
      for (const auto& item : scope->items) {
        if (item.exposes(schema_, ref.column)) candidates.push_back(&item);
      }
      if (candidates.size() > 1) {
        std::string names;
        for (const auto* c : candidates) {
          if (!names.empty()) names += ", ";
          names += c->label;
        }
        throw Error(ErrorKind::validation,
                    fmt::format("ambiguous column '{}' at offset {}: present in {}",
                                ref.column, ref.offset, names));
      }
      if (candidates.size() == 1) {
        if (candidates[0]->table_idx != npos)
          record_hit(*candidates[0], ref.column);
        return;
      }
    }

    // GROUP BY / HAVING fall back to output aliases after source columns.
    if (clause != Clause::general && !scopes_.empty() &&
        is_select_alias(scopes_.back(), ref.column))
      return;

    throw Error(ErrorKind::validation,
                fmt::format("unknown column '{}' at offset {}: not found in any "
                            "table in scope",
                            ref.column, ref.offset));
  }

  const DatabaseSchema& schema_;
  std::vector<Scope> scopes_;
  std::vector<std::map<std::string, DerivedPtr>> cte_frames_;
  std::set<std::pair<std::size_t, std::size_t>> hits_;
};

}  // namespace

SchemaLink extract_links(std::string_view sql, const DatabaseSchema& schema) {
  sql::SelectStmt stmt = sql::parse_sql(sql);
  Extractor extractor(schema);
  return extractor.run(stmt);
}

std::string serialize_link(const SchemaLink& link) {
  if (link.empty()) return "None";

  std::vector<std::string> tables = link.tables();
  std::sort(tables.begin(), tables.end(),
            [](const std::string& a, const std::string& b) { return ci_less(a, b); });

  std::string out;
  for (const auto& table : tables) {
    std::string cols;
    for (const auto& ref : link.columns) {
      if (!ci_equal(ref.table, table)) continue;
      if (!cols.empty()) cols += ", ";
      cols += ref.column;
    }
    out += fmt::format("{}({})\n", table, cols);
  }

  std::vector<std::string> fk_lines;
  for (const auto& fk : link.foreign_keys) {
    fk_lines.push_back(fmt::format("{}.{} = {}.{}", fk.from_table, fk.from_column,
                                   fk.to_table, fk.to_column));
  }
  std::sort(fk_lines.begin(), fk_lines.end(),
            [](const std::string& a, const std::string& b) { return ci_less(a, b); });
  for (const auto& line : fk_lines) out += line + "\n";

  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

GoldLinkBatch build_gold_links(const std::vector<Example>& examples,
                               const corpus::SchemaStore& store) {
  GoldLinkBatch batch;
  for (const auto& ex : examples) {
    const DatabaseSchema* schema = store.find(ex.db_id);
    if (!schema) {
      batch.failures.push_back(
          {ex.question_id, ex.db_id,
           fmt::format("no schema loaded for db_id '{}'", ex.db_id)});
      continue;
    }
    try {
      batch.links[ex.question_id] = extract_links(ex.gold_sql, *schema);
    } catch (const Error& e) {
      batch.failures.push_back({ex.question_id, ex.db_id, e.what()});
    }
  }
  return batch;
}

}  // namespace sqlink::linkex
