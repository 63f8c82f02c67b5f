#include "sqlink/sql_parser.hpp"

#include <cctype>
#include <set>

#include <fmt/format.h>

#include "sqlink/error.hpp"
#include "sqlink/text.hpp"

namespace sqlink::sql {

namespace {

enum class TokenKind { identifier, number, string, op, end };

struct Token {
  TokenKind kind = TokenKind::end;
  std::string text;        // unquoted/decoded text
  std::size_t offset = 0;  // byte offset in the input
  bool quoted = false;     // quoted identifier (never a keyword)
};

class Lexer {
 public:
  explicit Lexer(std::string_view input) : in_(input) {}

  std::vector<Token> run() {
    std::vector<Token> tokens;
    while (true) {
      skip_trivia();
      if (pos_ >= in_.size()) break;
      tokens.push_back(next_token());
    }
    tokens.push_back({TokenKind::end, "", in_.size(), false});
    return tokens;
  }

 private:
  void skip_trivia() {
    while (pos_ < in_.size()) {
      char c = in_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '-' && pos_ + 1 < in_.size() && in_[pos_ + 1] == '-') {
        while (pos_ < in_.size() && in_[pos_] != '\n') ++pos_;
      } else if (c == '/' && pos_ + 1 < in_.size() && in_[pos_ + 1] == '*') {
        pos_ += 2;
        while (pos_ + 1 < in_.size() &&
               !(in_[pos_] == '*' && in_[pos_ + 1] == '/'))
          ++pos_;
        pos_ = pos_ + 2 <= in_.size() ? pos_ + 2 : in_.size();
      } else {
        break;
      }
    }
  }

  [[noreturn]] void fail(std::size_t offset, const std::string& what) {
    throw SqlError(fmt::format("{} at offset {}", what, offset), offset,
                   offset < in_.size() ? std::string(1, in_[offset]) : "");
  }

  Token next_token() {
    std::size_t start = pos_;
    char c = in_[pos_];

    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < in_.size() &&
             (std::isalnum(static_cast<unsigned char>(in_[pos_])) ||
              in_[pos_] == '_' || in_[pos_] == '$'))
        ++pos_;
      return {TokenKind::identifier, std::string(in_.substr(start, pos_ - start)),
              start, false};
    }

    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < in_.size() &&
         std::isdigit(static_cast<unsigned char>(in_[pos_ + 1])))) {
      if (c == '0' && pos_ + 1 < in_.size() &&
          (in_[pos_ + 1] == 'x' || in_[pos_ + 1] == 'X')) {
        pos_ += 2;
        while (pos_ < in_.size() &&
               std::isxdigit(static_cast<unsigned char>(in_[pos_])))
          ++pos_;
      } else {
        while (pos_ < in_.size() &&
               std::isdigit(static_cast<unsigned char>(in_[pos_])))
          ++pos_;
        if (pos_ < in_.size() && in_[pos_] == '.') {
          ++pos_;
          while (pos_ < in_.size() &&
                 std::isdigit(static_cast<unsigned char>(in_[pos_])))
            ++pos_;
        }
        if (pos_ < in_.size() && (in_[pos_] == 'e' || in_[pos_] == 'E')) {
          std::size_t mark = pos_;
          ++pos_;
          if (pos_ < in_.size() && (in_[pos_] == '+' || in_[pos_] == '-')) ++pos_;
          if (pos_ < in_.size() &&
              std::isdigit(static_cast<unsigned char>(in_[pos_]))) {
            while (pos_ < in_.size() &&
                   std::isdigit(static_cast<unsigned char>(in_[pos_])))
              ++pos_;
          } else {
            pos_ = mark;  // not an exponent; 'e' starts the next token
          }
        }
      }
      return {TokenKind::number, std::string(in_.substr(start, pos_ - start)),
              start, false};
    }

    if (c == '\'') {
      std::string value;
      ++pos_;
      while (true) {
        if (pos_ >= in_.size()) fail(start, "unterminated string literal");
        if (in_[pos_] == '\'') {
          if (pos_ + 1 < in_.size() && in_[pos_ + 1] == '\'') {
            value += '\'';
            pos_ += 2;
            continue;
          }
          ++pos_;
          break;
        }
        value += in_[pos_++];
      }
      return {TokenKind::string, std::move(value), start, false};
    }

    if (c == '"' || c == '`' || c == '[') {
      char close = c == '[' ? ']' : c;
      std::string value;
      ++pos_;
      while (true) {
        if (pos_ >= in_.size()) fail(start, "unterminated quoted identifier");
        if (in_[pos_] == close) {
          if (close != ']' && pos_ + 1 < in_.size() && in_[pos_ + 1] == close) {
            value += close;
            pos_ += 2;
            continue;
          }
          ++pos_;
          break;
        }
        value += in_[pos_++];
      }
      return {TokenKind::identifier, std::move(value), start, true};
    }

    auto two = in_.substr(pos_, 2);
    for (std::string_view op : {"||", "<=", ">=", "<>", "!=", "=="}) {
      if (two == op) {
        pos_ += 2;
        return {TokenKind::op, std::string(op), start, false};
      }
    }
    static const std::string singles = "=<>+-*/%(),.;";
    if (singles.find(c) != std::string::npos) {
      ++pos_;
      return {TokenKind::op, std::string(1, c), start, false};
    }
    fail(start, fmt::format("unexpected character '{}'", c));
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

// Keywords that terminate an implicit (AS-less) alias.
const std::set<std::string>& alias_stop_words() {
  static const std::set<std::string> words = {
      "FROM",  "WHERE",  "GROUP",     "HAVING", "ORDER",  "LIMIT",
      "UNION", "INTERSECT", "EXCEPT", "JOIN",   "INNER",  "LEFT",
      "RIGHT", "FULL",   "CROSS",     "NATURAL", "ON",    "USING",
      "AS",    "OFFSET", "AND",       "OR",     "NOT",    "WHEN",
      "THEN",  "ELSE",   "END",       "CASE",   "IS",     "IN",
      "LIKE",  "GLOB",   "BETWEEN",   "ESCAPE", "ASC",    "DESC",
      "COLLATE", "SET",  "VALUES",    "SELECT", "DISTINCT", "ALL",
      "WITH",  "EXISTS", "NULLS"};
  return words;
}

class Parser {
 public:
  explicit Parser(std::string_view input)
      : input_(input), tokens_(Lexer(input).run()) {}

  SelectStmt parse_statement() {
    // Leading semicolons are harmless.
    while (accept_op(";")) {
    }
    if (!is_kw("SELECT") && !is_kw("WITH")) {
      const Token& tok = peek();
      throw SqlError(
          fmt::format("unsupported construct '{}' at offset {}: only SELECT "
                      "statements are supported",
                      tok.text, tok.offset),
          tok.offset, tok.text);
    }
    SelectStmt stmt = parse_select_stmt();
    while (accept_op(";")) {
    }
    if (peek().kind != TokenKind::end)
      unexpected("end of statement");
    return stmt;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    std::size_t idx = pos_ + ahead;
    return idx < tokens_.size() ? tokens_[idx] : tokens_.back();
  }

  const Token& advance() { return tokens_[pos_++]; }

  bool is_kw(std::string_view kw, std::size_t ahead = 0) const {
    const Token& tok = peek(ahead);
    return tok.kind == TokenKind::identifier && !tok.quoted &&
           ci_equal(tok.text, kw);
  }

  bool accept_kw(std::string_view kw) {
    if (!is_kw(kw)) return false;
    ++pos_;
    return true;
  }

  void expect_kw(std::string_view kw) {
    if (!accept_kw(kw)) unexpected(fmt::format("'{}'", kw));
  }

  bool is_op(std::string_view op, std::size_t ahead = 0) const {
    const Token& tok = peek(ahead);
    return tok.kind == TokenKind::op && tok.text == op;
  }

  bool accept_op(std::string_view op) {
    if (!is_op(op)) return false;
    ++pos_;
    return true;
  }

  void expect_op(std::string_view op) {
    if (!accept_op(op)) unexpected(fmt::format("'{}'", op));
  }

  [[noreturn]] void unexpected(const std::string& expected) const {
    const Token& tok = peek();
    std::string shown = tok.kind == TokenKind::end ? "<end>" : tok.text;
    throw SqlError(fmt::format("unexpected token '{}' at offset {}, expected {}",
                               shown, tok.offset, expected),
                   tok.offset, shown);
  }

  [[noreturn]] void unsupported(const Token& tok, const std::string& what) const {
    throw SqlError(fmt::format("unsupported construct '{}' at offset {}: {}",
                               tok.text, tok.offset, what),
                   tok.offset, tok.text);
  }

  std::string expect_identifier(const char* what) {
    const Token& tok = peek();
    if (tok.kind != TokenKind::identifier) unexpected(what);
    ++pos_;
    return tok.text;
  }

  bool at_identifier_usable_as_alias() const {
    const Token& tok = peek();
    if (tok.kind != TokenKind::identifier) return false;
    if (tok.quoted) return true;
    return alias_stop_words().count(to_upper(tok.text)) == 0;
  }

  static std::string to_upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
  }

  SelectStmt parse_select_stmt() {
    SelectStmt stmt;
    if (accept_kw("WITH")) {
      if (is_kw("RECURSIVE")) unsupported(peek(), "recursive CTEs");
      do {
        CommonTableExpr cte;
        cte.name = expect_identifier("CTE name");
        if (accept_op("(")) {
          do {
            cte.column_names.push_back(expect_identifier("CTE column name"));
          } while (accept_op(","));
          expect_op(")");
        }
        expect_kw("AS");
        expect_op("(");
        cte.body = std::make_unique<SelectStmt>(parse_select_stmt());
        expect_op(")");
        stmt.ctes.push_back(std::move(cte));
      } while (accept_op(","));
    }

    stmt.cores.push_back(parse_select_core());
    while (true) {
      if (accept_kw("UNION")) {
        stmt.compound_ops.push_back(accept_kw("ALL") ? CompoundOp::union_all
                                                     : CompoundOp::union_distinct);
      } else if (accept_kw("INTERSECT")) {
        stmt.compound_ops.push_back(CompoundOp::intersect);
      } else if (accept_kw("EXCEPT")) {
        stmt.compound_ops.push_back(CompoundOp::except_);
      } else {
        break;
      }
      stmt.cores.push_back(parse_select_core());
    }

    if (accept_kw("ORDER")) {
      expect_kw("BY");
      do {
        OrderItem item;
        item.expr = parse_expr();
        if (accept_kw("ASC")) {
        } else if (accept_kw("DESC")) {
          item.descending = true;
        }
        if (accept_kw("NULLS")) {
          if (!accept_kw("FIRST") && !accept_kw("LAST"))
            unexpected("'FIRST' or 'LAST'");
        }
        stmt.order_by.push_back(std::move(item));
      } while (accept_op(","));
    }

    if (accept_kw("LIMIT")) {
      ExprPtr first = parse_expr();
      if (accept_kw("OFFSET")) {
        stmt.limit = std::move(first);
        stmt.offset = parse_expr();
      } else if (accept_op(",")) {
        // LIMIT offset, count
        stmt.offset = std::move(first);
        stmt.limit = parse_expr();
      } else {
        stmt.limit = std::move(first);
      }
    }
    return stmt;
  }

  SelectCore parse_select_core() {
    expect_kw("SELECT");
    SelectCore core;
    if (accept_kw("DISTINCT"))
      core.distinct = true;
    else
      accept_kw("ALL");

    do {
      core.items.push_back(parse_select_item());
    } while (accept_op(","));

    if (accept_kw("FROM")) parse_from_clause(core);
    if (accept_kw("WHERE")) core.where = parse_expr();
    if (accept_kw("GROUP")) {
      expect_kw("BY");
      do {
        core.group_by.push_back(parse_expr());
      } while (accept_op(","));
    }
    if (accept_kw("HAVING")) core.having = parse_expr();
    return core;
  }

  SelectItem parse_select_item() {
    SelectItem item;
    if (accept_op("*")) {
      item.star = true;
      return item;
    }
    if (peek().kind == TokenKind::identifier && is_op(".", 1) && is_op("*", 2)) {
      item.star = true;
      item.star_qualifier = peek().text;
      pos_ += 3;
      return item;
    }
    item.expr = parse_expr();
    if (accept_kw("AS")) {
      item.alias = expect_identifier("alias");
    } else if (at_identifier_usable_as_alias()) {
      item.alias = advance().text;
    } else if (peek().kind == TokenKind::string) {
      item.alias = advance().text;
    }
    return item;
  }

  void parse_from_clause(SelectCore& core) {
    core.from.push_back(parse_from_item(JoinKind::none));
    while (true) {
      JoinKind kind;
      if (accept_op(",")) {
        kind = JoinKind::comma;
      } else if (is_kw("JOIN") || is_kw("INNER")) {
        accept_kw("INNER");
        expect_kw("JOIN");
        kind = JoinKind::inner;
      } else if (is_kw("LEFT")) {
        advance();
        accept_kw("OUTER");
        expect_kw("JOIN");
        kind = JoinKind::left;
      } else if (is_kw("CROSS")) {
        advance();
        expect_kw("JOIN");
        kind = JoinKind::cross;
      } else if (is_kw("RIGHT") || is_kw("FULL") || is_kw("NATURAL")) {
        unsupported(peek(), "join type");
      } else {
        break;
      }
      FromItem item = parse_from_item(kind);
      if (accept_kw("ON")) {
        item.on = parse_expr();
      } else if (accept_kw("USING")) {
        expect_op("(");
        do {
          item.using_columns.push_back(expect_identifier("USING column"));
        } while (accept_op(","));
        expect_op(")");
      }
      core.from.push_back(std::move(item));
    }
  }

  FromItem parse_from_item(JoinKind kind) {
    FromItem item;
    item.join = kind;
    item.offset = peek().offset;
    if (accept_op("(")) {
      if (!is_kw("SELECT") && !is_kw("WITH"))
        unsupported(peek(), "parenthesized join group");
      item.subquery = std::make_unique<SelectStmt>(parse_select_stmt());
      expect_op(")");
    } else {
      item.table = expect_identifier("table name");
    }
    if (accept_kw("AS")) {
      item.alias = expect_identifier("alias");
    } else if (at_identifier_usable_as_alias()) {
      item.alias = advance().text;
    }
    return item;
  }

  ExprPtr make_expr(Expr&& e) { return std::make_unique<Expr>(std::move(e)); }

  ExprPtr parse_expr() { return parse_or(); }

  ExprPtr parse_or() {
    ExprPtr lhs = parse_and();
    while (is_kw("OR")) {
      advance();
      ExprPtr rhs = parse_and();
      lhs = make_expr(
          {BinaryExpr{"OR", std::move(lhs), std::move(rhs)}});
    }
    return lhs;
  }

  ExprPtr parse_and() {
    ExprPtr lhs = parse_not();
    while (is_kw("AND")) {
      advance();
      ExprPtr rhs = parse_not();
      lhs = make_expr(
          {BinaryExpr{"AND", std::move(lhs), std::move(rhs)}});
    }
    return lhs;
  }

  ExprPtr parse_not() {
    if (accept_kw("NOT"))
      return make_expr({UnaryExpr{"NOT", parse_not()}});
    return parse_comparison();
  }

  ExprPtr parse_comparison() {
    ExprPtr lhs = parse_concat();
    while (true) {
      bool negated = false;
      if (is_kw("NOT") &&
          (is_kw("LIKE", 1) || is_kw("IN", 1) || is_kw("BETWEEN", 1) ||
           is_kw("GLOB", 1))) {
        advance();
        negated = true;
      }
      if (is_op("=") || is_op("==") || is_op("!=") || is_op("<>") ||
          is_op("<") || is_op("<=") || is_op(">") || is_op(">=")) {
        std::string op = advance().text;
        lhs = make_expr({BinaryExpr{op, std::move(lhs), parse_concat()}});
        continue;
      }
      if (accept_kw("IS")) {
        bool is_not = accept_kw("NOT");
        if (accept_kw("NULL")) {
          lhs = make_expr({IsNullExpr{std::move(lhs), is_not}});
        } else {
          lhs = make_expr({BinaryExpr{is_not ? "IS NOT" : "IS", std::move(lhs),
                                      parse_concat()}});
        }
        continue;
      }
      if (is_kw("LIKE") || is_kw("GLOB")) {
        std::string op = to_upper(advance().text);
        ExprPtr pattern = parse_concat();
        if (accept_kw("ESCAPE")) {
          ExprPtr esc = parse_concat();
          pattern = make_expr(
              {BinaryExpr{"ESCAPE", std::move(pattern), std::move(esc)}});
        }
        lhs = make_expr({BinaryExpr{negated ? "NOT " + op : op, std::move(lhs),
                                    std::move(pattern)}});
        continue;
      }
      if (accept_kw("BETWEEN")) {
        BetweenExpr between;
        between.value = std::move(lhs);
        between.negated = negated;
        between.low = parse_concat();
        expect_kw("AND");
        between.high = parse_concat();
        lhs = make_expr({std::move(between)});
        continue;
      }
      if (accept_kw("IN")) {
        InExpr in;
        in.value = std::move(lhs);
        in.negated = negated;
        expect_op("(");
        if (is_kw("SELECT") || is_kw("WITH")) {
          in.subquery = std::make_unique<SelectStmt>(parse_select_stmt());
        } else if (!is_op(")")) {
          do {
            in.list.push_back(parse_expr());
          } while (accept_op(","));
        }
        expect_op(")");
        lhs = make_expr({std::move(in)});
        continue;
      }
      if (negated) unexpected("'LIKE', 'IN', 'BETWEEN' or 'GLOB' after NOT");
      return lhs;
    }
  }

  ExprPtr parse_concat() {
    ExprPtr lhs = parse_additive();
    while (is_op("||")) {
      advance();
      lhs = make_expr({BinaryExpr{"||", std::move(lhs), parse_additive()}});
    }
    return lhs;
  }

  ExprPtr parse_additive() {
    ExprPtr lhs = parse_multiplicative();
    while (is_op("+") || is_op("-")) {
      std::string op = advance().text;
      lhs = make_expr({BinaryExpr{op, std::move(lhs), parse_multiplicative()}});
    }
    return lhs;
  }

  ExprPtr parse_multiplicative() {
    ExprPtr lhs = parse_unary();
    while (is_op("*") || is_op("/") || is_op("%")) {
      std::string op = advance().text;
      lhs = make_expr({BinaryExpr{op, std::move(lhs), parse_unary()}});
    }
    return lhs;
  }

  ExprPtr parse_unary() {
    if (is_op("-") || is_op("+")) {
      std::string op = advance().text;
      return make_expr({UnaryExpr{op, parse_unary()}});
    }
    return parse_primary();
  }

  ExprPtr parse_primary() {
    const Token& tok = peek();
    switch (tok.kind) {
      case TokenKind::number: {
        advance();
        LiteralExpr lit;
        lit.kind = tok.text.find_first_of(".eE") == std::string::npos ||
                           tok.text.rfind("0x", 0) == 0
                       ? LiteralExpr::Kind::integer
                       : LiteralExpr::Kind::real;
        lit.lexeme = tok.text;
        return make_expr({std::move(lit)});
      }
      case TokenKind::string: {
        advance();
        return make_expr({LiteralExpr{LiteralExpr::Kind::text, tok.text}});
      }
      case TokenKind::op:
        if (tok.text == "(") {
          advance();
          if (is_kw("SELECT") || is_kw("WITH")) {
            SubqueryExpr sub;
            sub.subquery = std::make_unique<SelectStmt>(parse_select_stmt());
            expect_op(")");
            return make_expr({std::move(sub)});
          }
          ExprPtr inner = parse_expr();
          if (is_op(",")) unsupported(peek(), "row value");
          expect_op(")");
          return inner;
        }
        unexpected("an expression");
      case TokenKind::identifier:
        break;
      case TokenKind::end:
        unexpected("an expression");
    }

    // Identifier-led expressions.
    if (!tok.quoted) {
      if (is_kw("NULL")) {
        advance();
        return make_expr({LiteralExpr{LiteralExpr::Kind::null, "NULL"}});
      }
      if (is_kw("TRUE") || is_kw("FALSE")) {
        advance();
        return make_expr({LiteralExpr{LiteralExpr::Kind::boolean, tok.text}});
      }
      if (is_kw("CURRENT_DATE") || is_kw("CURRENT_TIME") ||
          is_kw("CURRENT_TIMESTAMP")) {
        advance();
        return make_expr({LiteralExpr{LiteralExpr::Kind::text, tok.text}});
      }
      if (is_kw("CAST")) {
        advance();
        expect_op("(");
        CastExpr cast;
        cast.operand = parse_expr();
        expect_kw("AS");
        cast.type_name = expect_identifier("type name");
        // Multi-word and parameterized types: REAL(10, 2), UNSIGNED BIG INT.
        while (peek().kind == TokenKind::identifier && !peek().quoted)
          cast.type_name += " " + advance().text;
        if (accept_op("(")) {
          while (!is_op(")")) advance();
          expect_op(")");
        }
        expect_op(")");
        return make_expr({std::move(cast)});
      }
      if (is_kw("CASE")) {
        advance();
        CaseExpr case_expr;
        if (!is_kw("WHEN")) case_expr.operand = parse_expr();
        while (accept_kw("WHEN")) {
          ExprPtr when_expr = parse_expr();
          expect_kw("THEN");
          ExprPtr then_expr = parse_expr();
          case_expr.whens.emplace_back(std::move(when_expr), std::move(then_expr));
        }
        if (case_expr.whens.empty()) unexpected("'WHEN'");
        if (accept_kw("ELSE")) case_expr.else_expr = parse_expr();
        expect_kw("END");
        return make_expr({std::move(case_expr)});
      }
      if (is_kw("EXISTS")) {
        advance();
        expect_op("(");
        ExistsExpr exists;
        exists.subquery = std::make_unique<SelectStmt>(parse_select_stmt());
        expect_op(")");
        return make_expr({std::move(exists)});
      }
      if (is_kw("OVER")) unsupported(tok, "window functions");
    }

    std::size_t name_offset = tok.offset;
    std::string name = tok.text;
    advance();

    if (is_op("(")) {
      advance();
      FuncCallExpr call;
      call.name = name;
      if (accept_op("*")) {
        call.star_arg = true;
      } else if (!is_op(")")) {
        if (accept_kw("DISTINCT")) call.distinct_arg = true;
        do {
          call.args.push_back(parse_expr());
        } while (accept_op(","));
      }
      expect_op(")");
      if (is_kw("OVER")) unsupported(peek(), "window functions");
      return make_expr({std::move(call)});
    }

    if (is_op(".")) {
      advance();
      const Token& col = peek();
      if (col.kind != TokenKind::identifier) {
        if (is_op("*")) unsupported(col, "qualified star outside a select list");
        unexpected("column name after '.'");
      }
      advance();
      if (is_op("."))
        unsupported(peek(), "three-part column names");
      return make_expr({ColumnRefExpr{name, col.text, name_offset}});
    }

    return make_expr({ColumnRefExpr{"", name, name_offset}});
  }

  std::string_view input_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

SelectStmt parse_sql(std::string_view sql) {
  Parser parser(sql);
  return parser.parse_statement();
}

}  // namespace sqlink::sql
