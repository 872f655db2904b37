#pragma once

// Shared helpers for the test suites: a random generator of trees the parser
// can produce, and small utilities.

#include <string>
#include <vector>

#include "codetwin/nn_core.hpp"
#include "codetwin/pyparse.hpp"

namespace testsupport {

using codetwin::AstNode;
using codetwin::make_node;
using codetwin::NodeKind;

class RandomTrees {
 public:
  explicit RandomTrees(std::uint64_t seed) : rng_(seed) {}

  /// A Module of 1-4 random statements, nesting at most `depth` blocks.
  AstNode module(int depth = 2) {
    AstNode m = make_node(NodeKind::Module);
    const auto n = 1 + rng_.uniform_int(4);
    for (std::uint64_t i = 0; i < n; ++i) m.children.push_back(statement(depth));
    return m;
  }

  AstNode expression(int depth) {
    if (depth <= 0) return atom();
    switch (rng_.uniform_int(9)) {
      case 0: return make_node(NodeKind::BinOp, pick(kBinOps), {expression(depth - 1), expression(depth - 1)});
      case 1: return make_node(NodeKind::BoolOp, pick({"And", "Or"}), {expression(depth - 1), expression(depth - 1)});
      case 2: return make_node(NodeKind::UnaryOp, pick({"USub", "UAdd", "Not", "Invert"}), {expression(depth - 1)});
      case 3: return make_node(NodeKind::Compare, pick(kCompares), {expression(depth - 1), expression(depth - 1)});
      case 4: {
        AstNode call = make_node(NodeKind::Call, {name()});
        const auto n = rng_.uniform_int(3);
        for (std::uint64_t i = 0; i < n; ++i) call.children.push_back(expression(depth - 1));
        return call;
      }
      case 5: {
        AstNode list = make_node(NodeKind::List);
        const auto n = rng_.uniform_int(3);
        for (std::uint64_t i = 0; i < n; ++i) list.children.push_back(expression(depth - 1));
        return list;
      }
      case 6: return make_node(NodeKind::Subscript, {name(), expression(depth - 1)});
      default: return atom();
    }
  }

  AstNode statement(int depth) {
    const auto choice = rng_.uniform_int(depth > 0 ? 10 : 5);
    switch (choice) {
      case 0: return make_node(NodeKind::Assign, {target(), expression(2)});
      case 1: return make_node(NodeKind::AugAssign, pick(kBinOps), {target(), expression(2)});
      case 2: return make_node(NodeKind::Expr, {expression(2)});
      case 3: {
        AstNode r = make_node(NodeKind::Return);
        if (rng_.uniform_int(2)) r.children.push_back(expression(2));
        return r;
      }
      case 4: return make_node(NodeKind::Assign, {name(), atom()});
      case 5: {
        AstNode node = make_node(NodeKind::If, {expression(2)});
        body(node, depth);
        const auto tail = rng_.uniform_int(3);
        if (tail == 1) {
          AstNode orelse = make_node(NodeKind::Else);
          body(orelse, depth);
          node.children.push_back(std::move(orelse));
        } else if (tail == 2) {
          node.children.push_back(make_node(NodeKind::Else, {statement_of(NodeKind::If, depth)}));
        }
        return node;
      }
      case 6: {
        AstNode node = make_node(NodeKind::While, {expression(2)});
        body(node, depth);
        return node;
      }
      case 7: {
        AstNode node = make_node(NodeKind::For, {name(), expression(2)});
        body(node, depth);
        return node;
      }
      case 8: {
        AstNode node = make_node(NodeKind::FunctionDef, ident());
        AstNode args = make_node(NodeKind::Arguments);
        const auto n = rng_.uniform_int(3);
        for (std::uint64_t i = 0; i < n; ++i) args.children.push_back(make_node(NodeKind::Arg, ident()));
        node.children.push_back(std::move(args));
        body(node, depth);
        return node;
      }
      default: return make_node(NodeKind::Expr, {expression(1)});
    }
  }

  codetwin::nn::Rng& rng() { return rng_; }

 private:
  AstNode statement_of(NodeKind kind, int depth) {
    for (;;) {
      AstNode s = statement(depth);
      if (s.kind == kind) return s;
    }
  }

  void body(AstNode& node, int depth) {
    const auto n = 1 + rng_.uniform_int(3);
    for (std::uint64_t i = 0; i < n; ++i) node.children.push_back(statement(depth - 1));
  }

  std::string pick(std::initializer_list<const char*> options) {
    auto it = options.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(rng_.uniform_int(options.size())));
    return *it;
  }
  std::string pick(const std::vector<std::string>& options) { return options[rng_.uniform_int(options.size())]; }

  std::string ident() { return pick({"a", "b", "total", "x_1", "_tmp", "data", "n"}); }
  AstNode name() { return make_node(NodeKind::Name, ident()); }
  AstNode target() { return rng_.uniform_int(4) == 0 ? make_node(NodeKind::Subscript, {name(), atom()}) : name(); }

  AstNode atom() {
    switch (rng_.uniform_int(5)) {
      case 0: return make_node(NodeKind::Num, std::to_string(rng_.uniform_int(1000)));
      case 1: return make_node(NodeKind::Str, pick({"'a b'", "\"x_y\"", "''", "'tab\\t'"}));
      case 2: return make_node(NodeKind::Name, pick({"True", "False", "None"}));
      default: return name();
    }
  }

  inline static const std::vector<std::string> kBinOps{"Add", "Sub",    "Mult",   "Div",    "FloorDiv",
                                                       "Mod", "Pow",    "LShift", "RShift", "BitOr",
                                                       "BitXor", "BitAnd", "MatMult"};
  inline static const std::vector<std::string> kCompares{"Eq", "NotEq", "Lt", "LtE", "Gt",
                                                         "GtE", "Is",   "IsNot", "In", "NotIn"};

  codetwin::nn::Rng rng_;
};

}  // namespace testsupport
