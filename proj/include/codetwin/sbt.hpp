#pragma once

// Structure-based traversal: a depth-first flattening of an AST in which every
// subtree is bracketed by "(" label ... ")" label.

#include <string>
#include <string_view>
#include <vector>

#include "codetwin/pyparse.hpp"

namespace codetwin {

inline constexpr std::string_view kSbtOpen = "(";
inline constexpr std::string_view kSbtClose = ")";

using SbtSequence = std::vector<std::string>;

/// "Kind" for valueless nodes, "Kind_value" otherwise. Inside the value "_"
/// is written "__" and whitespace as "_s" (space), "_t" (tab), "_n" (newline),
/// so every label is a single whitespace-free word.
std::string node_label(const AstNode& node);

SbtSequence sbt_serialize(const AstNode& root);

/// Inverse of sbt_serialize. Throws MalformedSbt on unbalanced delimiters,
/// mismatched open/close labels or labels that do not decode to a node.
AstNode sbt_parse(const SbtSequence& seq);

/// Whitespace-joined labels, the text-dump form of a sequence.
std::string sbt_to_text(const SbtSequence& seq);

}  // namespace codetwin
