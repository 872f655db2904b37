#pragma once

// Lexer and recursive-descent parser for a small Python subset, plus the
// JSON interchange format used to import ASTs produced by other parsers.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "codetwin/errors.hpp"

namespace codetwin {

enum class TokenKind { Identifier, Integer, String, Operator, Keyword, Newline, Indent, Dedent, Eof };

std::string_view token_kind_name(TokenKind kind);

struct LexToken {
  TokenKind kind;
  std::string lexeme;
  int line = 1;
  int column = 1;

  bool operator==(const LexToken&) const = default;
};

/// Full token stream, including synthesized NEWLINE/INDENT/DEDENT and a
/// single trailing EOF. Indentation must use spaces; tabs are rejected.
std::vector<LexToken> tokenize(std::string_view source);

// `Else` holds the statements of an else branch as the last child of `If`;
// an `elif` is an `Else` whose only child is another `If`.
enum class NodeKind {
  Module,
  FunctionDef,
  Return,
  Assign,
  AugAssign,
  If,
  Else,
  While,
  For,
  Expr,
  Call,
  BinOp,
  BoolOp,
  UnaryOp,
  Compare,
  Name,
  Num,
  Str,
  List,
  Subscript,
  Arguments,
  Arg,
};

std::string_view kind_name(NodeKind kind);
std::optional<NodeKind> kind_from_name(std::string_view name);
bool is_value_bearing(NodeKind kind);
bool is_leaf_kind(NodeKind kind);

struct AstNode {
  NodeKind kind = NodeKind::Module;
  std::optional<std::string> value;
  std::vector<AstNode> children;

  bool operator==(const AstNode&) const = default;

  /// Number of nodes in the subtree rooted here.
  std::size_t node_count() const;
};

AstNode make_node(NodeKind kind, std::vector<AstNode> children = {});
AstNode make_node(NodeKind kind, std::string value, std::vector<AstNode> children = {});

/// Checks the kind/value/children invariants; returns a description of the
/// first violation, or nullopt when the tree is well formed.
std::optional<std::string> find_invariant_violation(const AstNode& root);

AstNode parse_module(const std::vector<LexToken>& tokens);

/// tokenize + parse_module.
AstNode parse_source(std::string_view source);

/// Renders a tree as Python source accepted by parse_source. Parsing the
/// result reproduces the tree exactly.
std::string to_source(const AstNode& root);

std::string ast_to_json(const AstNode& root);
AstNode ast_from_json(std::string_view text);

/// Module[stmts...] -> Module[FunctionDef(name)[arguments[], stmts...]].
AstNode wrap_in_function(const AstNode& module, const std::string& name);

}  // namespace codetwin
