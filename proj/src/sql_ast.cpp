#include "sqlink/sql_ast.hpp"

namespace sqlink::sql {

namespace {

void visit_expr_tree(const Expr& expr, const std::function<void(const Expr&)>& fn,
                     const std::function<void(const SelectStmt&)>& on_subquery) {
  fn(expr);
  auto walk = [&](const ExprPtr& child) {
    if (child) visit_expr_tree(*child, fn, on_subquery);
  };
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, FuncCallExpr>) {
          for (const auto& arg : node.args) walk(arg);
        } else if constexpr (std::is_same_v<T, UnaryExpr>) {
          walk(node.operand);
        } else if constexpr (std::is_same_v<T, BinaryExpr>) {
          walk(node.lhs);
          walk(node.rhs);
        } else if constexpr (std::is_same_v<T, BetweenExpr>) {
          walk(node.value);
          walk(node.low);
          walk(node.high);
        } else if constexpr (std::is_same_v<T, InExpr>) {
          walk(node.value);
          for (const auto& item : node.list) walk(item);
          if (node.subquery) on_subquery(*node.subquery);
        } else if constexpr (std::is_same_v<T, ExistsExpr>) {
          if (node.subquery) on_subquery(*node.subquery);
        } else if constexpr (std::is_same_v<T, SubqueryExpr>) {
          if (node.subquery) on_subquery(*node.subquery);
        } else if constexpr (std::is_same_v<T, CaseExpr>) {
          walk(node.operand);
          for (const auto& [when_expr, then_expr] : node.whens) {
            walk(when_expr);
            walk(then_expr);
          }
          walk(node.else_expr);
        } else if constexpr (std::is_same_v<T, CastExpr>) {
          walk(node.operand);
        } else if constexpr (std::is_same_v<T, IsNullExpr>) {
          walk(node.operand);
        }
      },
      expr.node);
}

void visit_stmt(const SelectStmt& stmt, const std::function<void(const Expr&)>& fn) {
  auto on_subquery = [&](const SelectStmt& sub) { visit_stmt(sub, fn); };
  auto walk = [&](const ExprPtr& e) {
    if (e) visit_expr_tree(*e, fn, on_subquery);
  };
  for (const auto& cte : stmt.ctes) {
    if (cte.body) visit_stmt(*cte.body, fn);
  }
  for (const auto& core : stmt.cores) {
    for (const auto& item : core.items) walk(item.expr);
    for (const auto& from : core.from) {
      if (from.subquery) visit_stmt(*from.subquery, fn);
      walk(from.on);
    }
    walk(core.where);
    for (const auto& g : core.group_by) walk(g);
    walk(core.having);
  }
  for (const auto& item : stmt.order_by) walk(item.expr);
  walk(stmt.limit);
  walk(stmt.offset);
}

}  // namespace

void visit_exprs(const SelectStmt& stmt, const std::function<void(const Expr&)>& fn) {
  visit_stmt(stmt, fn);
}

void visit_exprs(const Expr& expr, const std::function<void(const Expr&)>& fn) {
  visit_expr_tree(expr, fn, [&](const SelectStmt& sub) { visit_stmt(sub, fn); });
}

std::size_t count_column_refs(const SelectStmt& stmt) {
  std::size_t count = 0;
  visit_exprs(stmt, [&](const Expr& e) {
    if (std::holds_alternative<ColumnRefExpr>(e.node)) ++count;
  });
  return count;
}

}  // namespace sqlink::sql
