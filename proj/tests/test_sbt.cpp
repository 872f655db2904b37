#include "doctest.h"

#include <functional>

#include "codetwin/errors.hpp"
#include "codetwin/sbt.hpp"
#include "support.hpp"

using namespace codetwin;

namespace {

AstNode num(const char* v) { return make_node(NodeKind::Num, v); }

// Independent reference: the recursive definition written out directly.
void reference_sbt(const AstNode& n, SbtSequence& out) {
  std::string label(kind_name(n.kind));
  if (n.value) {
    std::string esc;
    for (char c : *n.value) {
      switch (c) {
        case '_': esc += "__"; break;
        case ' ': esc += "_s"; break;
        case '\t': esc += "_t"; break;
        case '\n': esc += "_n"; break;
        default: esc += c;
      }
    }
    label += "_" + esc;
  }
  out.push_back("(");
  out.push_back(label);
  for (const auto& c : n.children) reference_sbt(c, out);
  out.push_back(")");
  out.push_back(label);
}

}  // namespace

TEST_CASE("node_label") {
  CHECK(node_label(make_node(NodeKind::Return)) == "Return");
  CHECK(node_label(make_node(NodeKind::Name, "x")) == "Name_x");
  CHECK(node_label(make_node(NodeKind::BinOp, "Add")) == "BinOp_Add");
  CHECK(node_label(make_node(NodeKind::Name, "x_1")) == "Name_x__1");
  CHECK(node_label(make_node(NodeKind::Str, "'a b'")) == "Str_'a_sb'");
  CHECK(node_label(make_node(NodeKind::Arg, "a")) == "arg_a");
}

TEST_CASE("sbt_serialize examples") {
  CHECK(sbt_serialize(num("1")) == SbtSequence{"(", "Num_1", ")", "Num_1"});
  CHECK(sbt_serialize(make_node(NodeKind::Return, {num("1")})) ==
        SbtSequence{"(", "Return", "(", "Num_1", ")", "Num_1", ")", "Return"});
  CHECK(sbt_serialize(make_node(NodeKind::BinOp, "Add", {num("1"), num("2")})) ==
        SbtSequence{"(", "BinOp_Add", "(", "Num_1", ")", "Num_1", "(", "Num_2", ")", "Num_2", ")", "BinOp_Add"});
}

TEST_CASE("sbt_parse examples and errors") {
  CHECK(sbt_parse({"(", "Num_1", ")", "Num_1"}) == num("1"));
  AstNode r = make_node(NodeKind::Return, {num("1")});
  CHECK(sbt_parse(sbt_serialize(r)) == r);
  CHECK_THROWS_AS(sbt_parse({"(", "Return", ")", "Num_1"}), MalformedSbt);
  CHECK_THROWS_AS(sbt_parse({"(", "Return"}), MalformedSbt);
  CHECK_THROWS_AS(sbt_parse({"(", "Return", ")", "Return", ")", "Return"}), MalformedSbt);
  CHECK_THROWS_AS(sbt_parse({"Return"}), MalformedSbt);
  CHECK_THROWS_AS(sbt_parse({"(", "Bogus", ")", "Bogus"}), MalformedSbt);
  CHECK_THROWS_AS(sbt_parse({}), MalformedSbt);
}

TEST_CASE("sbt_to_text joins with spaces") {
  CHECK(sbt_to_text({"(", "Num_1", ")", "Num_1"}) == "( Num_1 ) Num_1");
}

TEST_CASE("property: SBT length, consecutiveness and round trip over random trees") {
  testsupport::RandomTrees gen(5);
  for (int i = 0; i < 300; ++i) {
    AstNode t = gen.module(3);
    SbtSequence seq = sbt_serialize(t);
    SbtSequence ref;
    reference_sbt(t, ref);
    CHECK(seq == ref);
    CHECK(seq.size() == 4 * t.node_count());
    CHECK(sbt_parse(seq) == t);
    // The first child's subtree occupies a consecutive block right after the root label.
    if (!t.children.empty()) {
      SbtSequence child = sbt_serialize(t.children[0]);
      CHECK(std::equal(child.begin(), child.end(), seq.begin() + 2));
    }
  }
}
