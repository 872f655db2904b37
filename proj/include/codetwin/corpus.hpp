#pragma once

// Labeled solution corpora: loading from disk, per-class splits, and a
// synthetic generator that builds clone classes from program schemata and
// semantics-preserving AST rewrites.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "codetwin/nn_core.hpp"
#include "codetwin/pyparse.hpp"

namespace codetwin {

struct Solution {
  std::string id;
  AstNode tree;
};

struct LabeledClass {
  std::string label;
  std::vector<Solution> solutions;
};

struct LabeledCorpus {
  std::vector<LabeledClass> classes;
  std::string provenance;

  std::size_t solution_count() const;
  std::vector<std::size_t> class_sizes() const;
};

/// Empty string when labels are unique, ids unique per class and every root
/// is a Module; otherwise a description of the first problem.
std::string find_corpus_violation(const LabeledCorpus& corpus);

struct LoadResult {
  LabeledCorpus corpus;
  std::vector<std::string> report;    // "SKIP <path> <reason>"
  std::vector<std::string> warnings;  // dropped classes
};

/// Reads root/<class>/<id>.py (or <id>.ast.json when use_json), parses each
/// file and wraps it as `def solution():`. Classes and files are sorted.
LoadResult load_corpus(const std::string& root_dir, bool use_json = false);

struct CorpusSplit {
  LabeledCorpus train;
  LabeledCorpus test;
  std::uint64_t seed = 0;
};

/// Per class: shuffle with the seed, ⌈test_fraction·n⌉ solutions go to test.
CorpusSplit split_corpus(const LabeledCorpus& corpus, double test_fraction, std::uint64_t seed);

/// Moves whole classes (by index) out of the corpus.
CorpusSplit hold_out_classes(const LabeledCorpus& corpus, const std::vector<std::size_t>& held_out);

enum class TransformKind { RenameIdentifiers, ForToWhile, SwapIndependentStmts, WrapRedundantIfTrue };

std::string_view transform_name(TransformKind kind);

struct TransformResult {
  AstNode tree;
  std::map<std::string, std::string> renames;  // identity except for rename
  std::vector<std::string> introduced;         // fresh variables added by the rewrite
};

/// One rewrite at a site chosen with `rng`. Throws NotApplicable when the
/// tree has no site for `kind`.
TransformResult transform(const AstNode& ast, TransformKind kind, nn::Rng& rng);

/// Substitutes identifier names (Name, arg and FunctionDef values) via `map`.
AstNode rename_identifiers(const AstNode& ast, const std::map<std::string, std::string>& map);

/// Identifier names that a rename may touch: every Name/arg/FunctionDef value
/// except builtins and True/False/None.
std::vector<std::string> user_identifiers(const AstNode& ast);

/// Shared pools the generator draws from.
const std::vector<std::string>& identifier_pool();
inline constexpr std::size_t kSchemaCount = 8;

/// Source text (module level, not yet wrapped) of one base program.
std::string schema_source(std::size_t schema, nn::Rng& rng);

struct SyntheticSource {
  std::string label;
  std::string id;
  std::string source;  // module-level program text
};

/// k_classes base programs, each expanded into per_class variants.
std::vector<SyntheticSource> synthesize_sources(std::size_t k_classes, std::size_t per_class, std::uint64_t seed);

/// synthesize_sources, parsed and wrapped as `def solution():`.
LabeledCorpus generate_synthetic(std::size_t k_classes, std::size_t per_class, std::uint64_t seed);

}  // namespace codetwin
