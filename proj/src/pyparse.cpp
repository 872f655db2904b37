#include "codetwin/pyparse.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <json.hpp>
#include <set>
#include <utility>

namespace codetwin {

namespace {

struct KindInfo {
  NodeKind kind;
  std::string_view name;
  bool value_bearing;
  bool leaf;
};

constexpr std::array<KindInfo, 22> kKinds{{
    {NodeKind::Module, "Module", false, false},
    {NodeKind::FunctionDef, "FunctionDef", true, false},
    {NodeKind::Return, "Return", false, false},
    {NodeKind::Assign, "Assign", false, false},
    {NodeKind::AugAssign, "AugAssign", true, false},
    {NodeKind::If, "If", false, false},
    {NodeKind::Else, "Else", false, false},
    {NodeKind::While, "While", false, false},
    {NodeKind::For, "For", false, false},
    {NodeKind::Expr, "Expr", false, false},
    {NodeKind::Call, "Call", false, false},
    {NodeKind::BinOp, "BinOp", true, false},
    {NodeKind::BoolOp, "BoolOp", true, false},
    {NodeKind::UnaryOp, "UnaryOp", true, false},
    {NodeKind::Compare, "Compare", true, false},
    {NodeKind::Name, "Name", true, true},
    {NodeKind::Num, "Num", true, true},
    {NodeKind::Str, "Str", true, true},
    {NodeKind::List, "List", false, false},
    {NodeKind::Subscript, "Subscript", false, false},
    {NodeKind::Arguments, "arguments", false, false},
    {NodeKind::Arg, "arg", true, true},
}};

const KindInfo& info(NodeKind kind) { return kKinds[static_cast<std::size_t>(kind)]; }

const std::set<std::string, std::less<>> kKeywords{
    "False", "None",   "True",    "and",   "as",    "assert", "async", "await",
    "break", "class",  "continue", "def",  "del",   "elif",   "else",  "except",
    "finally", "for",  "from",    "global", "if",   "import", "in",    "is",
    "lambda", "nonlocal", "not",  "or",    "pass",  "raise",  "return", "try",
    "while", "with",   "yield"};

// Longest operators first so that maximal munch works with a linear scan.
constexpr std::array<std::string_view, 47> kOperators{
    "**=", "//=", ">>=", "<<=", "...", "**", "//", "==", "!=", "<=", ">=", "<<",
    ">>",  "+=",  "-=",  "*=",  "/=",  "%=", "&=", "|=", "^=", "@=", "->", ":=",
    "+",   "-",   "*",   "/",   "%",   "<",  ">",  "=",  "(",  ")",  "[",  "]",
    "{",   "}",   ",",   ":",   ".",   ";",  "&",  "|",  "^",  "~",  "@"};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<LexToken> run() {
    indents_.push_back(0);
    bool at_line_start = true;
    while (pos_ < src_.size()) {
      if (at_line_start && depth_ == 0) {
        if (!handle_indentation()) continue;  // blank or comment-only line consumed
        at_line_start = false;
      }
      char c = src_[pos_];
      if (c == '\n') {
        bool logical_end = depth_ == 0;
        if (logical_end) emit(TokenKind::Newline, "", line_, col_);
        advance_newline();
        at_line_start = logical_end;
        continue;
      }
      if (c == '\r') {
        ++pos_;
        continue;
      }
      if (c == ' ') {
        advance();
        continue;
      }
      if (c == '\t') throw ParseError("tab character", line_, col_);
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        continue;
      }
      if (c == '\\') {
        if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') {
          ++pos_;
          advance_newline();
          continue;
        }
        throw ParseError("unexpected backslash", line_, col_);
      }
      if (is_ident_start(c)) {
        lex_identifier();
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        lex_integer();
      } else if (c == '"' || c == '\'') {
        lex_string();
      } else {
        lex_operator();
      }
    }
    if (!tokens_.empty() && tokens_.back().kind != TokenKind::Newline &&
        tokens_.back().kind != TokenKind::Dedent) {
      emit(TokenKind::Newline, "", line_, col_);
    }
    while (indents_.size() > 1) {
      indents_.pop_back();
      emit(TokenKind::Dedent, "", line_, col_);
    }
    emit(TokenKind::Eof, "", line_, col_);
    return std::move(tokens_);
  }

 private:
  // Returns false when the whole line was blank/comment and has been consumed.
  bool handle_indentation() {
    std::size_t p = pos_;
    int width = 0;
    while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t' || src_[p] == '\r')) {
      if (src_[p] == '\t') throw ParseError("tab in indentation", line_, width + 1);
      if (src_[p] == ' ') ++width;
      ++p;
    }
    if (p >= src_.size() || src_[p] == '\n' || src_[p] == '#') {
      while (p < src_.size() && src_[p] != '\n') ++p;
      pos_ = p;
      col_ = 1;
      if (pos_ < src_.size()) advance_newline();
      return false;
    }
    col_ += static_cast<int>(p - pos_);
    pos_ = p;
    if (width > indents_.back()) {
      indents_.push_back(width);
      emit(TokenKind::Indent, "", line_, 1);
    } else {
      while (width < indents_.back()) {
        indents_.pop_back();
        emit(TokenKind::Dedent, "", line_, 1);
      }
      if (width != indents_.back()) throw ParseError("inconsistent dedent", line_, col_);
    }
    return true;
  }

  void lex_identifier() {
    int line = line_, col = col_;
    std::size_t start = pos_;
    while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance();
    std::string text(src_.substr(start, pos_ - start));
    TokenKind kind = kKeywords.count(text) ? TokenKind::Keyword : TokenKind::Identifier;
    emit(kind, std::move(text), line, col);
  }

  void lex_integer() {
    int line = line_, col = col_;
    std::size_t start = pos_;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    if (pos_ < src_.size() && is_ident_start(src_[pos_])) {
      throw ParseError("malformed number", line_, col_);
    }
    emit(TokenKind::Integer, std::string(src_.substr(start, pos_ - start)), line, col);
  }

  void lex_string() {
    int line = line_, col = col_;
    std::size_t start = pos_;
    char quote = src_[pos_];
    bool triple = src_.substr(pos_, 3) == std::string(3, quote);
    std::size_t open = triple ? 3 : 1;
    for (std::size_t i = 0; i < open; ++i) advance();
    while (true) {
      if (pos_ >= src_.size()) throw ParseError("unterminated string", line, col);
      char c = src_[pos_];
      if (c == '\\') {
        advance();
        if (pos_ >= src_.size()) throw ParseError("unterminated string", line, col);
        if (src_[pos_] == '\n') {
          advance_newline();
        } else {
          advance();
        }
        continue;
      }
      if (c == '\n') {
        if (!triple) throw ParseError("unterminated string", line, col);
        advance_newline();
        continue;
      }
      if (c == quote && (!triple || src_.substr(pos_, 3) == std::string(3, quote))) {
        for (std::size_t i = 0; i < open; ++i) advance();
        break;
      }
      advance();
    }
    emit(TokenKind::String, std::string(src_.substr(start, pos_ - start)), line, col);
  }

  void lex_operator() {
    for (std::string_view op : kOperators) {
      if (src_.substr(pos_, op.size()) == op) {
        int line = line_, col = col_;
        for (std::size_t i = 0; i < op.size(); ++i) advance();
        if (op == "(" || op == "[" || op == "{") ++depth_;
        if ((op == ")" || op == "]" || op == "}") && depth_ > 0) --depth_;
        emit(TokenKind::Operator, std::string(op), line, col);
        return;
      }
    }
    throw ParseError("illegal character '" + std::string(1, src_[pos_]) + "'", line_, col_);
  }

  void advance() {
    ++pos_;
    ++col_;
  }
  void advance_newline() {
    ++pos_;
    ++line_;
    col_ = 1;
  }
  void emit(TokenKind kind, std::string lexeme, int line, int col) {
    tokens_.push_back(LexToken{kind, std::move(lexeme), line, col});
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  int depth_ = 0;
  std::vector<int> indents_;
  std::vector<LexToken> tokens_;
};

std::optional<std::string> binop_name(std::string_view op) {
  static const std::pair<std::string_view, std::string_view> table[] = {
      {"+", "Add"},     {"-", "Sub"},     {"*", "Mult"},  {"/", "Div"},     {"//", "FloorDiv"},
      {"%", "Mod"},     {"**", "Pow"},    {"<<", "LShift"}, {">>", "RShift"}, {"|", "BitOr"},
      {"^", "BitXor"},  {"&", "BitAnd"},  {"@", "MatMult"}};
  for (auto [sym, name] : table)
    if (sym == op) return std::string(name);
  return std::nullopt;
}

std::string_view binop_symbol(std::string_view name) {
  static const std::pair<std::string_view, std::string_view> table[] = {
      {"Add", "+"},     {"Sub", "-"},     {"Mult", "*"},  {"Div", "/"},     {"FloorDiv", "//"},
      {"Mod", "%"},     {"Pow", "**"},    {"LShift", "<<"}, {"RShift", ">>"}, {"BitOr", "|"},
      {"BitXor", "^"},  {"BitAnd", "&"},  {"MatMult", "@"}};
  for (auto [n, sym] : table)
    if (n == name) return sym;
  throw FormatError("unknown operator '" + std::string(name) + "'");
}

std::string_view compare_symbol(std::string_view name) {
  static const std::pair<std::string_view, std::string_view> table[] = {
      {"Eq", "=="}, {"NotEq", "!="}, {"Lt", "<"},   {"LtE", "<="},      {"Gt", ">"},
      {"GtE", ">="}, {"Is", "is"},   {"IsNot", "is not"}, {"In", "in"}, {"NotIn", "not in"}};
  for (auto [n, sym] : table)
    if (n == name) return sym;
  throw FormatError("unknown comparison '" + std::string(name) + "'");
}

class Parser {
 public:
  explicit Parser(const std::vector<LexToken>& tokens) : toks_(tokens) {
    if (toks_.empty() || toks_.back().kind != TokenKind::Eof) {
      int line = toks_.empty() ? 1 : toks_.back().line;
      int col = toks_.empty() ? 1 : toks_.back().column;
      throw ParseError("token stream does not end with eof", line, col);
    }
  }

  AstNode module() {
    AstNode root = make_node(NodeKind::Module);
    while (!at(TokenKind::Eof)) {
      if (accept(TokenKind::Newline)) continue;
      statement(root.children);
    }
    return root;
  }

 private:
  const LexToken& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  bool at(TokenKind kind) const { return peek().kind == kind; }
  bool at_op(std::string_view op) const {
    return peek().kind == TokenKind::Operator && peek().lexeme == op;
  }
  bool at_kw(std::string_view kw) const {
    return peek().kind == TokenKind::Keyword && peek().lexeme == kw;
  }
  bool accept(TokenKind kind) {
    if (!at(kind)) return false;
    ++pos_;
    return true;
  }
  bool accept_op(std::string_view op) {
    if (!at_op(op)) return false;
    ++pos_;
    return true;
  }
  bool accept_kw(std::string_view kw) {
    if (!at_kw(kw)) return false;
    ++pos_;
    return true;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, peek().line, peek().column);
  }
  [[noreturn]] void unexpected() const {
    const LexToken& t = peek();
    if (t.kind == TokenKind::Keyword) fail("unsupported construct '" + t.lexeme + "'");
    std::string what = t.lexeme.empty() ? std::string(token_kind_name(t.kind)) : "'" + t.lexeme + "'";
    fail("unexpected " + what);
  }
  void expect(TokenKind kind) {
    if (!accept(kind)) unexpected();
  }
  void expect_op(std::string_view op) {
    if (!accept_op(op)) unexpected();
  }
  std::string expect_identifier() {
    if (!at(TokenKind::Identifier)) unexpected();
    return toks_[pos_++].lexeme;
  }

  void statement(std::vector<AstNode>& out) {
    if (at_kw("def")) {
      out.push_back(function_def());
    } else if (at_kw("if")) {
      out.push_back(if_statement());
    } else if (at_kw("while")) {
      ++pos_;
      AstNode node = make_node(NodeKind::While);
      node.children.push_back(expression());
      expect_op(":");
      suite(node.children);
      out.push_back(std::move(node));
    } else if (at_kw("for")) {
      ++pos_;
      AstNode node = make_node(NodeKind::For);
      node.children.push_back(make_node(NodeKind::Name, expect_identifier()));
      if (!accept_kw("in")) unexpected();
      node.children.push_back(expression());
      expect_op(":");
      suite(node.children);
      out.push_back(std::move(node));
    } else {
      simple_statements(out);
    }
  }

  AstNode function_def() {
    ++pos_;
    AstNode node = make_node(NodeKind::FunctionDef, expect_identifier());
    AstNode args = make_node(NodeKind::Arguments);
    expect_op("(");
    if (!at_op(")")) {
      do {
        if (at_op(")")) break;
        args.children.push_back(make_node(NodeKind::Arg, expect_identifier()));
      } while (accept_op(","));
    }
    expect_op(")");
    node.children.push_back(std::move(args));
    expect_op(":");
    suite(node.children);
    return node;
  }

  AstNode if_statement() {
    ++pos_;  // 'if' or 'elif'
    AstNode node = make_node(NodeKind::If);
    node.children.push_back(expression());
    expect_op(":");
    suite(node.children);
    if (at_kw("elif")) {
      node.children.push_back(make_node(NodeKind::Else, {if_statement()}));
    } else if (accept_kw("else")) {
      AstNode orelse = make_node(NodeKind::Else);
      expect_op(":");
      suite(orelse.children);
      node.children.push_back(std::move(orelse));
    }
    return node;
  }

  void suite(std::vector<AstNode>& out) {
    if (accept(TokenKind::Newline)) {
      expect(TokenKind::Indent);
      while (!accept(TokenKind::Dedent)) {
        if (at(TokenKind::Eof)) unexpected();
        statement(out);
      }
    } else {
      simple_statements(out);
    }
  }

  void simple_statements(std::vector<AstNode>& out) {
    out.push_back(simple_statement());
    while (accept_op(";")) {
      if (at(TokenKind::Newline)) break;
      out.push_back(simple_statement());
    }
    expect(TokenKind::Newline);
  }

  AstNode simple_statement() {
    if (accept_kw("return")) {
      AstNode node = make_node(NodeKind::Return);
      if (!at(TokenKind::Newline) && !at_op(";")) node.children.push_back(expression());
      return node;
    }
    if (at(TokenKind::Keyword) && !starts_expression()) unexpected();
    AstNode lhs = expression();
    if (at_op("=")) {
      check_target(lhs);
      ++pos_;
      AstNode rhs = expression();
      if (at_op("=")) fail("chained assignment is not supported");
      return make_node(NodeKind::Assign, {std::move(lhs), std::move(rhs)});
    }
    if (peek().kind == TokenKind::Operator && peek().lexeme.size() >= 2 &&
        peek().lexeme.back() == '=' && peek().lexeme != "==" && peek().lexeme != "!=" &&
        peek().lexeme != "<=" && peek().lexeme != ">=") {
      std::string sym = peek().lexeme.substr(0, peek().lexeme.size() - 1);
      auto name = binop_name(sym);
      if (!name) unexpected();
      check_target(lhs);
      ++pos_;
      return make_node(NodeKind::AugAssign, *name, {std::move(lhs), expression()});
    }
    if (at_op(",")) fail("tuples are not supported");
    return make_node(NodeKind::Expr, {std::move(lhs)});
  }

  bool starts_expression() const {
    return at_kw("not") || at_kw("True") || at_kw("False") || at_kw("None");
  }

  void check_target(const AstNode& target) const {
    if (target.kind != NodeKind::Name && target.kind != NodeKind::Subscript) {
      fail("invalid assignment target");
    }
    if (target.kind == NodeKind::Name &&
        (target.value == "True" || target.value == "False" || target.value == "None")) {
      fail("cannot assign to constant");
    }
  }

  AstNode expression() { return or_test(); }

  AstNode bool_chain(std::string_view kw, std::string_view name, AstNode (Parser::*next)()) {
    AstNode first = (this->*next)();
    if (!at_kw(kw)) return first;
    AstNode node = make_node(NodeKind::BoolOp, std::string(name), {std::move(first)});
    while (accept_kw(kw)) node.children.push_back((this->*next)());
    return node;
  }

  AstNode or_test() { return bool_chain("or", "Or", &Parser::and_test); }
  AstNode and_test() { return bool_chain("and", "And", &Parser::not_test); }

  AstNode not_test() {
    if (accept_kw("not")) return make_node(NodeKind::UnaryOp, "Not", {not_test()});
    return comparison();
  }

  std::optional<std::string> comparison_operator() {
    const LexToken& t = peek();
    if (t.kind == TokenKind::Operator) {
      static const std::pair<std::string_view, std::string_view> table[] = {
          {"==", "Eq"}, {"!=", "NotEq"}, {"<", "Lt"}, {"<=", "LtE"}, {">", "Gt"}, {">=", "GtE"}};
      for (auto [sym, name] : table) {
        if (t.lexeme == sym) {
          ++pos_;
          return std::string(name);
        }
      }
      return std::nullopt;
    }
    if (accept_kw("in")) return "In";
    if (at_kw("not") && peek(1).kind == TokenKind::Keyword && peek(1).lexeme == "in") {
      pos_ += 2;
      return "NotIn";
    }
    if (accept_kw("is")) return accept_kw("not") ? "IsNot" : "Is";
    return std::nullopt;
  }

  AstNode comparison() {
    AstNode left = binary(0);
    auto op = comparison_operator();
    if (!op) return left;
    AstNode node = make_node(NodeKind::Compare, *op, {std::move(left), binary(0)});
    std::size_t save = pos_;
    if (comparison_operator()) {
      pos_ = save;
      fail("chained comparison is not supported");
    }
    return node;
  }

  // Binary operator levels, loosest first: | ^ & shifts additive multiplicative.
  AstNode binary(int level) {
    static const std::vector<std::vector<std::string_view>> levels{
        {"|"}, {"^"}, {"&"}, {"<<", ">>"}, {"+", "-"}, {"*", "/", "//", "%", "@"}};
    if (level == static_cast<int>(levels.size())) return factor();
    AstNode left = binary(level + 1);
    while (peek().kind == TokenKind::Operator) {
      const auto& ops = levels[static_cast<std::size_t>(level)];
      auto it = std::find(ops.begin(), ops.end(), peek().lexeme);
      if (it == ops.end()) break;
      ++pos_;
      left = make_node(NodeKind::BinOp, *binop_name(*it), {std::move(left), binary(level + 1)});
    }
    return left;
  }

  AstNode factor() {
    if (accept_op("-")) return make_node(NodeKind::UnaryOp, "USub", {factor()});
    if (accept_op("+")) return make_node(NodeKind::UnaryOp, "UAdd", {factor()});
    if (accept_op("~")) return make_node(NodeKind::UnaryOp, "Invert", {factor()});
    return power();
  }

  AstNode power() {
    AstNode base = primary();
    if (accept_op("**")) return make_node(NodeKind::BinOp, "Pow", {std::move(base), factor()});
    return base;
  }

  AstNode primary() {
    AstNode node = atom();
    while (true) {
      if (accept_op("(")) {
        AstNode call = make_node(NodeKind::Call, {std::move(node)});
        if (!at_op(")")) {
          do {
            if (at_op(")")) break;
            if (at(TokenKind::Identifier) && peek(1).kind == TokenKind::Operator &&
                peek(1).lexeme == "=") {
              fail("keyword arguments are not supported");
            }
            call.children.push_back(expression());
          } while (accept_op(","));
        }
        expect_op(")");
        node = std::move(call);
      } else if (accept_op("[")) {
        AstNode index = expression();
        if (at_op(":")) fail("slices are not supported");
        expect_op("]");
        node = make_node(NodeKind::Subscript, {std::move(node), std::move(index)});
      } else if (at_op(".")) {
        fail("attribute access is not supported");
      } else {
        return node;
      }
    }
  }

  AstNode atom() {
    const LexToken& t = peek();
    switch (t.kind) {
      case TokenKind::Identifier:
        ++pos_;
        return make_node(NodeKind::Name, t.lexeme);
      case TokenKind::Integer:
        ++pos_;
        return make_node(NodeKind::Num, t.lexeme);
      case TokenKind::String:
        ++pos_;
        if (at(TokenKind::String)) fail("implicit string concatenation is not supported");
        return make_node(NodeKind::Str, t.lexeme);
      case TokenKind::Keyword:
        if (t.lexeme == "True" || t.lexeme == "False" || t.lexeme == "None") {
          ++pos_;
          return make_node(NodeKind::Name, t.lexeme);
        }
        unexpected();
      case TokenKind::Operator:
        if (accept_op("(")) {
          if (at_op(")")) fail("tuples are not supported");
          AstNode inner = expression();
          if (at_op(",")) fail("tuples are not supported");
          expect_op(")");
          return inner;
        }
        if (accept_op("[")) {
          AstNode list = make_node(NodeKind::List);
          if (!at_op("]")) {
            do {
              if (at_op("]")) break;
              list.children.push_back(expression());
              if (at_kw("for")) fail("comprehensions are not supported");
            } while (accept_op(","));
          }
          expect_op("]");
          return list;
        }
        unexpected();
      default:
        unexpected();
    }
  }

  const std::vector<LexToken>& toks_;
  std::size_t pos_ = 0;
};

void check_node(const AstNode& node, bool is_root, std::optional<std::string>& out) {
  if (out) return;
  const KindInfo& ki = info(node.kind);
  if (node.kind == NodeKind::Module && !is_root) {
    out = "Module below the root";
    return;
  }
  if (ki.value_bearing != node.value.has_value()) {
    out = std::string(ki.name) + (ki.value_bearing ? " requires a value" : " must not carry a value");
    return;
  }
  if (ki.leaf && !node.children.empty()) {
    out = std::string(ki.name) + " must be a leaf";
    return;
  }
  for (const auto& child : node.children) check_node(child, false, out);
}

// ---------------------------------------------------------------------------
// Source rendering.

constexpr int kPrecOr = 1, kPrecAnd = 2, kPrecNot = 3, kPrecCompare = 4, kPrecUnary = 11,
              kPrecPow = 12, kPrecAtom = 13;

int binop_precedence(std::string_view op) {
  if (op == "BitOr") return 5;
  if (op == "BitXor") return 6;
  if (op == "BitAnd") return 7;
  if (op == "LShift" || op == "RShift") return 8;
  if (op == "Add" || op == "Sub") return 9;
  if (op == "Pow") return kPrecPow;
  return 10;
}

int precedence(const AstNode& n) {
  switch (n.kind) {
    case NodeKind::BoolOp:
      return *n.value == "Or" ? kPrecOr : kPrecAnd;
    case NodeKind::UnaryOp:
      return *n.value == "Not" ? kPrecNot : kPrecUnary;
    case NodeKind::Compare:
      return kPrecCompare;
    case NodeKind::BinOp:
      return binop_precedence(*n.value);
    default:
      return kPrecAtom;
  }
}

class SourceWriter {
 public:
  std::string module(const AstNode& root) {
    if (root.kind != NodeKind::Module) throw InvalidRoot("to_source expects a Module root");
    for (const auto& stmt : root.children) statement(stmt, 0);
    return std::move(out_);
  }

 private:
  const AstNode& child(const AstNode& n, std::size_t i) {
    if (i >= n.children.size()) {
      throw FormatError(std::string(kind_name(n.kind)) + " is missing children");
    }
    return n.children[i];
  }

  void block(const std::vector<AstNode>& stmts, std::size_t from, int indent) {
    if (from >= stmts.size()) throw FormatError("empty block cannot be rendered");
    for (std::size_t i = from; i < stmts.size(); ++i) {
      if (stmts[i].kind == NodeKind::Else) continue;
      statement(stmts[i], indent);
    }
  }

  void line(int indent, const std::string& text) {
    out_.append(static_cast<std::size_t>(indent) * 4, ' ');
    out_ += text;
    out_ += '\n';
  }

  void if_chain(const AstNode& n, int indent, bool is_elif) {
    line(indent, std::string(is_elif ? "elif " : "if ") + expr(child(n, 0), 0) + ":");
    block(n.children, 1, indent + 1);
    if (n.children.back().kind != NodeKind::Else) return;
    const AstNode& orelse = n.children.back();
    if (orelse.children.size() == 1 && orelse.children[0].kind == NodeKind::If) {
      if_chain(orelse.children[0], indent, true);
    } else {
      line(indent, "else:");
      block(orelse.children, 0, indent + 1);
    }
  }

  void statement(const AstNode& n, int indent) {
    switch (n.kind) {
      case NodeKind::FunctionDef: {
        const AstNode& args = child(n, 0);
        std::string params;
        for (const auto& a : args.children) {
          if (!params.empty()) params += ", ";
          params += *a.value;
        }
        line(indent, "def " + *n.value + "(" + params + "):");
        block(n.children, 1, indent + 1);
        break;
      }
      case NodeKind::Return:
        line(indent, n.children.empty() ? "return" : "return " + expr(n.children[0], 0));
        break;
      case NodeKind::Assign:
        line(indent, expr(child(n, 0), 0) + " = " + expr(child(n, 1), 0));
        break;
      case NodeKind::AugAssign:
        line(indent, expr(child(n, 0), 0) + " " + std::string(binop_symbol(*n.value)) + "= " +
                         expr(child(n, 1), 0));
        break;
      case NodeKind::If:
        if_chain(n, indent, false);
        break;
      case NodeKind::While:
        line(indent, "while " + expr(child(n, 0), 0) + ":");
        block(n.children, 1, indent + 1);
        break;
      case NodeKind::For:
        line(indent, "for " + expr(child(n, 0), 0) + " in " + expr(child(n, 1), 0) + ":");
        block(n.children, 2, indent + 1);
        break;
      case NodeKind::Expr:
        line(indent, expr(child(n, 0), 0));
        break;
      default:
        throw FormatError(std::string(kind_name(n.kind)) + " is not a statement");
    }
  }

  std::string wrap(const AstNode& n, int min_prec) {
    std::string s = expr(n, min_prec);
    return precedence(n) < min_prec ? "(" + s + ")" : s;
  }

  std::string expr(const AstNode& n, int /*min_prec*/) {
    switch (n.kind) {
      case NodeKind::Name:
      case NodeKind::Num:
      case NodeKind::Str:
        return *n.value;
      case NodeKind::BinOp: {
        int p = precedence(n);
        if (*n.value == "Pow") {
          return wrap(child(n, 0), kPrecAtom) + " ** " + wrap(child(n, 1), kPrecUnary);
        }
        return wrap(child(n, 0), p) + " " + std::string(binop_symbol(*n.value)) + " " +
               wrap(child(n, 1), p + 1);
      }
      case NodeKind::BoolOp: {
        int p = precedence(n);
        std::string s;
        for (const auto& v : n.children) {
          if (!s.empty()) s += *n.value == "Or" ? " or " : " and ";
          s += wrap(v, p + 1);
        }
        return s;
      }
      case NodeKind::UnaryOp: {
        const std::string& op = *n.value;
        if (op == "Not") return "not " + wrap(child(n, 0), kPrecNot);
        std::string sym = op == "USub" ? "-" : op == "UAdd" ? "+" : "~";
        return sym + wrap(child(n, 0), kPrecUnary);
      }
      case NodeKind::Compare:
        return wrap(child(n, 0), kPrecCompare + 1) + " " + std::string(compare_symbol(*n.value)) +
               " " + wrap(child(n, 1), kPrecCompare + 1);
      case NodeKind::Call: {
        std::string s = wrap(child(n, 0), kPrecAtom) + "(";
        for (std::size_t i = 1; i < n.children.size(); ++i) {
          if (i > 1) s += ", ";
          s += expr(n.children[i], 0);
        }
        return s + ")";
      }
      case NodeKind::Subscript:
        return wrap(child(n, 0), kPrecAtom) + "[" + expr(child(n, 1), 0) + "]";
      case NodeKind::List: {
        std::string s = "[";
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          if (i > 0) s += ", ";
          s += expr(n.children[i], 0);
        }
        return s + "]";
      }
      default:
        throw FormatError(std::string(kind_name(n.kind)) + " is not an expression");
    }
  }

  std::string out_;
};

AstNode node_from_json(const nlohmann::json& j, bool is_root) {
  if (!j.is_object()) throw FormatError("AST node must be a JSON object");
  auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) throw FormatError("AST node is missing 'kind'");
  std::string kind_text = kind_it->get<std::string>();
  auto kind = kind_from_name(kind_text);
  if (!kind) throw FormatError("unknown node kind '" + kind_text + "'");
  auto children_it = j.find("children");
  if (children_it == j.end() || !children_it->is_array()) {
    throw FormatError(kind_text + " node is missing 'children'");
  }
  AstNode node;
  node.kind = *kind;
  auto value_it = j.find("value");
  if (value_it != j.end() && !value_it->is_null()) {
    if (!value_it->is_string()) throw FormatError(kind_text + " value must be a string");
    if (!is_value_bearing(*kind)) throw FormatError(kind_text + " must not carry a value");
    node.value = value_it->get<std::string>();
  } else if (is_value_bearing(*kind)) {
    throw FormatError(kind_text + " requires a value");
  }
  if (*kind == NodeKind::Module && !is_root) throw FormatError("Module below the root");
  if (is_leaf_kind(*kind) && !children_it->empty()) throw FormatError(kind_text + " must be a leaf");
  node.children.reserve(children_it->size());
  for (const auto& c : *children_it) node.children.push_back(node_from_json(c, false));
  return node;
}

nlohmann::json node_to_json(const AstNode& n) {
  nlohmann::json j;
  j["kind"] = kind_name(n.kind);
  if (n.value) j["value"] = *n.value;
  j["children"] = nlohmann::json::array();
  for (const auto& c : n.children) j["children"].push_back(node_to_json(c));
  return j;
}

}  // namespace

std::string_view token_kind_name(TokenKind kind) {
  switch (kind) {
    case TokenKind::Identifier: return "identifier";
    case TokenKind::Integer: return "integer";
    case TokenKind::String: return "string";
    case TokenKind::Operator: return "operator";
    case TokenKind::Keyword: return "keyword";
    case TokenKind::Newline: return "newline";
    case TokenKind::Indent: return "indent";
    case TokenKind::Dedent: return "dedent";
    case TokenKind::Eof: return "eof";
  }
  return "?";
}

std::string_view kind_name(NodeKind kind) { return info(kind).name; }

std::optional<NodeKind> kind_from_name(std::string_view name) {
  for (const auto& k : kKinds)
    if (k.name == name) return k.kind;
  return std::nullopt;
}

bool is_value_bearing(NodeKind kind) { return info(kind).value_bearing; }
bool is_leaf_kind(NodeKind kind) { return info(kind).leaf; }

std::size_t AstNode::node_count() const {
  std::size_t n = 1;
  for (const auto& c : children) n += c.node_count();
  return n;
}

AstNode make_node(NodeKind kind, std::vector<AstNode> children) {
  return AstNode{kind, std::nullopt, std::move(children)};
}

AstNode make_node(NodeKind kind, std::string value, std::vector<AstNode> children) {
  return AstNode{kind, std::move(value), std::move(children)};
}

std::optional<std::string> find_invariant_violation(const AstNode& root) {
  std::optional<std::string> out;
  check_node(root, true, out);
  return out;
}

std::vector<LexToken> tokenize(std::string_view source) { return Lexer(source).run(); }

AstNode parse_module(const std::vector<LexToken>& tokens) { return Parser(tokens).module(); }

AstNode parse_source(std::string_view source) { return parse_module(tokenize(source)); }

std::string to_source(const AstNode& root) { return SourceWriter().module(root); }

std::string ast_to_json(const AstNode& root) { return node_to_json(root).dump(); }

AstNode ast_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
  return node_from_json(j, true);
}

AstNode wrap_in_function(const AstNode& module, const std::string& name) {
  if (module.kind != NodeKind::Module) {
    throw InvalidRoot("wrap_in_function expects a Module root, got " +
                      std::string(kind_name(module.kind)));
  }
  AstNode fn = make_node(NodeKind::FunctionDef, name, {make_node(NodeKind::Arguments)});
  fn.children.insert(fn.children.end(), module.children.begin(), module.children.end());
  return make_node(NodeKind::Module, {std::move(fn)});
}

}  // namespace codetwin
