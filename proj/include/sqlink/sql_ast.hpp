#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace sqlink::sql {

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct SelectStmt;
using SelectPtr = std::unique_ptr<SelectStmt>;

// a / t.a; qualifier empty when unqualified.
struct ColumnRefExpr {
  std::string qualifier;
  std::string column;
  std::size_t offset = 0;
};

struct LiteralExpr {
  enum class Kind { integer, real, text, null, boolean };
  Kind kind = Kind::integer;
  std::string lexeme;
};

struct FuncCallExpr {
  std::string name;
  bool distinct_arg = false;
  bool star_arg = false;  // COUNT(*)
  std::vector<ExprPtr> args;
};

struct UnaryExpr {
  std::string op;  // "-", "+", "NOT"
  ExprPtr operand;
};

struct BinaryExpr {
  std::string op;  // "AND", "OR", "=", "||", "+", "LIKE", "IS", ...
  ExprPtr lhs;
  ExprPtr rhs;
};

struct BetweenExpr {
  ExprPtr value;
  ExprPtr low;
  ExprPtr high;
  bool negated = false;
};

struct InExpr {
  ExprPtr value;
  std::vector<ExprPtr> list;  // value list form
  SelectPtr subquery;         // subquery form
  bool negated = false;
};

struct ExistsExpr {
  SelectPtr subquery;
};

// Scalar subquery in an expression position.
struct SubqueryExpr {
  SelectPtr subquery;
};

struct CaseExpr {
  ExprPtr operand;  // may be null (searched CASE)
  std::vector<std::pair<ExprPtr, ExprPtr>> whens;
  ExprPtr else_expr;  // may be null
};

struct CastExpr {
  ExprPtr operand;
  std::string type_name;
};

struct IsNullExpr {
  ExprPtr operand;
  bool negated = false;
};

struct Expr {
  std::variant<ColumnRefExpr, LiteralExpr, FuncCallExpr, UnaryExpr, BinaryExpr,
               BetweenExpr, InExpr, ExistsExpr, SubqueryExpr, CaseExpr,
               CastExpr, IsNullExpr>
      node;
};

// One item of the select list: an expression, `*`, or `t.*`.
struct SelectItem {
  ExprPtr expr;           // null for star items
  std::string alias;      // explicit or implicit alias
  bool star = false;
  std::string star_qualifier;  // set for t.*
};

enum class JoinKind { none, comma, inner, left, cross };

struct FromItem {
  std::string table;     // base table or CTE name; empty for derived tables
  SelectPtr subquery;    // derived table
  std::string alias;
  JoinKind join = JoinKind::none;  // how this item attaches to the previous one
  ExprPtr on;
  std::vector<std::string> using_columns;
  std::size_t offset = 0;
};

enum class CompoundOp { union_all, union_distinct, intersect, except_ };

struct SelectCore {
  bool distinct = false;
  std::vector<SelectItem> items;
  std::vector<FromItem> from;
  ExprPtr where;
  std::vector<ExprPtr> group_by;
  ExprPtr having;
};

struct OrderItem {
  ExprPtr expr;
  bool descending = false;
};

struct CommonTableExpr {
  std::string name;
  std::vector<std::string> column_names;  // optional explicit column list
  SelectPtr body;
};

// One SELECT statement: optional CTE list, one or more cores joined by set
// operations, then ORDER BY / LIMIT over the compound result.
struct SelectStmt {
  std::vector<CommonTableExpr> ctes;
  std::vector<SelectCore> cores;
  std::vector<CompoundOp> compound_ops;  // size == cores.size() - 1
  std::vector<OrderItem> order_by;
  ExprPtr limit;
  ExprPtr offset;
};

// Walks every expression in the statement, recursing into subqueries.
void visit_exprs(const SelectStmt& stmt, const std::function<void(const Expr&)>& fn);
void visit_exprs(const Expr& expr, const std::function<void(const Expr&)>& fn);

// Counts column reference nodes across the whole statement.
std::size_t count_column_refs(const SelectStmt& stmt);

}  // namespace sqlink::sql
