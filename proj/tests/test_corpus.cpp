#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <set>

#include <unistd.h>

#include "codetwin/baseline.hpp"
#include "codetwin/corpus.hpp"
#include "codetwin/errors.hpp"
#include "codetwin/interp.hpp"
#include "codetwin/sbt.hpp"
#include "codetwin/textio.hpp"
#include "codetwin/vocab.hpp"
#include "transform_oracle.hpp"

using namespace codetwin;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("codetwin_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  void write(const std::string& rel, const std::string& text) const {
    fs::create_directories((path / rel).parent_path());
    write_file((path / rel).string(), text);
  }
};

LabeledCorpus sized_corpus(const std::vector<std::size_t>& sizes) {
  LabeledCorpus c;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    LabeledClass cls{"c" + std::to_string(k), {}};
    for (std::size_t i = 0; i < sizes[k]; ++i) {
      cls.solutions.push_back({"s" + std::to_string(i), parse_source("x = " + std::to_string(i))});
    }
    c.classes.push_back(cls);
  }
  return c;
}

std::vector<std::string> ids(const LabeledClass& cls) {
  std::vector<std::string> out;
  for (const auto& s : cls.solutions) out.push_back(s.id);
  return out;
}

}  // namespace

TEST_CASE("load_corpus: layout, sorting and the skip report") {
  TempDir dir("load");
  dir.write("beta/b1.py", "x = 1\n");
  dir.write("beta/a0.py", "y = 2\n");
  dir.write("alpha/one.py", "z = 3\n");
  dir.write("alpha/two.py", "def f(:\n");
  dir.write("alpha/notes.txt", "ignored");
  dir.write("gamma/bad.py", "x = $\n");
  auto res = load_corpus(dir.path.string());
  REQUIRE(res.corpus.classes.size() == 2);
  CHECK(res.corpus.classes[0].label == "alpha");
  CHECK(res.corpus.classes[1].label == "beta");
  CHECK(ids(res.corpus.classes[0]) == std::vector<std::string>{"one"});
  CHECK(ids(res.corpus.classes[1]) == std::vector<std::string>{"a0", "b1"});
  REQUIRE(res.report.size() == 2);
  for (const auto& line : res.report) CHECK(line.rfind("SKIP ", 0) == 0);
  CHECK(res.report[0].find("two.py") != std::string::npos);
  CHECK(res.warnings.size() == 1);
  CHECK(res.corpus.classes[1].solutions[0].tree ==
        wrap_in_function(parse_source("y = 2\n"), "solution"));
  CHECK(find_corpus_violation(res.corpus).empty());
}

TEST_CASE("load_corpus: empty directory, JSON mode and missing root") {
  TempDir dir("empty");
  CHECK(load_corpus(dir.path.string()).corpus.classes.empty());

  TempDir js("json");
  js.write("k/a.ast.json", ast_to_json(parse_source("x = 1")));
  js.write("k/b.ast.json", "{broken");
  js.write("k/c.py", "x = 2");
  auto res = load_corpus(js.path.string(), true);
  REQUIRE(res.corpus.classes.size() == 1);
  CHECK(ids(res.corpus.classes[0]) == std::vector<std::string>{"a"});
  CHECK(res.report.size() == 1);
  CHECK_THROWS_AS(load_corpus((dir.path / "nope").string()), Error);
}

TEST_CASE("find_corpus_violation") {
  auto c = sized_corpus({2, 2});
  CHECK(find_corpus_violation(c).empty());
  auto dup = c;
  dup.classes[1].label = "c0";
  CHECK_FALSE(find_corpus_violation(dup).empty());
  auto dup_id = c;
  dup_id.classes[0].solutions[1].id = "s0";
  CHECK_FALSE(find_corpus_violation(dup_id).empty());
  auto bad_root = c;
  bad_root.classes[0].solutions[0].tree = make_node(NodeKind::Num, "1");
  CHECK_FALSE(find_corpus_violation(bad_root).empty());
}

TEST_CASE("split_corpus: ceiling rule, partition and determinism") {
  auto c = sized_corpus({5, 7, 2});
  auto s = split_corpus(c, 0.2, 3);
  CHECK(s.seed == 3);
  const std::size_t expected_test[] = {1, 2, 1};
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(s.test.classes[k].label == c.classes[k].label);
    CHECK(s.train.classes[k].label == c.classes[k].label);
    CHECK(s.test.classes[k].solutions.size() == expected_test[k]);
    auto test_ids = ids(s.test.classes[k]);
    std::set<std::string> test(test_ids.begin(), test_ids.end());
    auto train_ids = ids(s.train.classes[k]);
    std::set<std::string> train(train_ids.begin(), train_ids.end());
    std::set<std::string> both = train;
    both.insert(test.begin(), test.end());
    CHECK(both.size() == c.classes[k].solutions.size());
    CHECK(train.size() + test.size() == both.size());
  }
  auto again = split_corpus(c, 0.2, 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(ids(again.test.classes[k]) == ids(s.test.classes[k]));

  CHECK_THROWS_AS(split_corpus(sized_corpus({3, 1}), 0.5, 0), TooFewSolutions);
  CHECK_THROWS_AS(split_corpus(c, 0.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(split_corpus(c, 1.0, 0), std::invalid_argument);
}

TEST_CASE("hold_out_classes") {
  auto c = sized_corpus({2, 3, 4, 5});
  auto s = hold_out_classes(c, {1, 3});
  REQUIRE(s.train.classes.size() == 2);
  REQUIRE(s.test.classes.size() == 2);
  CHECK(s.train.classes[0].label == "c0");
  CHECK(s.train.classes[1].label == "c2");
  CHECK(s.test.classes[0].label == "c1");
  CHECK(s.test.classes[1].label == "c3");
  CHECK(s.test.solution_count() == 8);
}

TEST_CASE("rename_identifiers and user_identifiers") {
  AstNode a = parse_source("a = 1");
  CHECK(rename_identifiers(a, {{"a", "x"}}) == parse_source("x = 1"));
  AstNode t = parse_source("def f(p):\n  return len(p) + q\nr = f(True)\n");
  auto users = user_identifiers(t);
  std::sort(users.begin(), users.end());
  CHECK(std::find(users.begin(), users.end(), "len") == users.end());
  CHECK(std::find(users.begin(), users.end(), "True") == users.end());
  CHECK(std::find(users.begin(), users.end(), "p") != users.end());
  CHECK(std::find(users.begin(), users.end(), "q") != users.end());
}

TEST_CASE("transform examples") {
  nn::Rng rng(0);
  SUBCASE("rename is a consistent bijection onto the shared pool") {
    AstNode t = parse_source("a = 1\nb = a + a\n");
    auto r = transform(t, TransformKind::RenameIdentifiers, rng);
    REQUIRE(r.renames.size() == 2);
    CHECK(r.renames.at("a") != r.renames.at("b"));
    CHECK(r.tree == rename_identifiers(t, r.renames));
    CHECK(r.introduced.empty());
    CHECK_THROWS_AS(transform(parse_source("1 + 2"), TransformKind::RenameIdentifiers, rng), NotApplicable);
  }
  SUBCASE("swap exchanges independent neighbours") {
    auto r = transform(parse_source("a = 1; b = 2"), TransformKind::SwapIndependentStmts, rng);
    CHECK(r.tree == parse_source("b = 2\na = 1\n"));
    CHECK_THROWS_AS(transform(parse_source("a = 1\nb = a\n"), TransformKind::SwapIndependentStmts, rng),
                    NotApplicable);
  }
  SUBCASE("for_to_while uses an explicit counter") {
    AstNode t = parse_source("s = 0\nfor i in range(3):\n    s = s + i\n");
    auto r = transform(t, TransformKind::ForToWhile, rng);
    REQUIRE(r.introduced.size() == 1);
    const std::string& c = r.introduced[0];
    CHECK(r.tree == parse_source("s = 0\n" + c + " = 0\nwhile " + c + " < 3:\n    i = " + c + "\n    s = s + i\n    " +
                                 c + " += 1\n"));
    auto check = oracle::check(t, r, {});
    CHECK(check.ok);
    CHECK_THROWS_AS(transform(parse_source("for i in range(n):\n    n = 1\n"), TransformKind::ForToWhile, rng),
                    NotApplicable);
    CHECK_THROWS_AS(transform(parse_source("for i in data:\n    x = i\n"), TransformKind::ForToWhile, rng),
                    NotApplicable);
  }
  SUBCASE("wrap adds a redundant if True") {
    auto r = transform(parse_source("x = 1"), TransformKind::WrapRedundantIfTrue, rng);
    CHECK(r.tree == parse_source("if True:\n    x = 1\n"));
  }
}

TEST_CASE("property: transformations preserve execution on 600+ instances") {
  nn::Rng rng(99);
  std::size_t applied = 0, attempts = 0;
  const TransformKind kinds[] = {TransformKind::RenameIdentifiers, TransformKind::ForToWhile,
                                 TransformKind::SwapIndependentStmts, TransformKind::WrapRedundantIfTrue};
  while (applied < 600 && attempts < 5000) {
    ++attempts;
    AstNode base = parse_source(schema_source(attempts % kSchemaCount, rng));
    // Random preliminary rewrites give the final transform varied sites.
    for (auto pre = rng.uniform_int(3); pre > 0; --pre) {
      try {
        base = transform(base, kinds[1 + rng.uniform_int(3)], rng).tree;
      } catch (const NotApplicable&) {
      }
    }
    if (rng.uniform_int(2)) base = wrap_in_function(base, "solution");
    const TransformKind kind = kinds[attempts % 4];
    TransformResult r;
    try {
      r = transform(base, kind, rng);
    } catch (const NotApplicable&) {
      continue;
    }
    ++applied;
    CAPTURE(to_source(base));
    CAPTURE(to_source(r.tree));
    CHECK_FALSE(find_invariant_violation(r.tree).has_value());
    CHECK(parse_source(to_source(r.tree)) == r.tree);
    for (int trial = 0; trial < 3; ++trial) {
      auto verdict = oracle::check(base, r, oracle::sample_inputs(rng));
      CAPTURE(verdict.detail);
      CHECK(verdict.ok);
    }
  }
  CHECK(applied >= 600);
}

TEST_CASE("generate_synthetic: determinism, shape and parseability") {
  auto a = synthesize_sources(2, 2, 7);
  auto b = synthesize_sources(2, 2, 7);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a[i].label == b[i].label);
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].source == b[i].source);
    CHECK_NOTHROW(parse_source(a[i].source));
  }
  CHECK(a[0].label == "class00");
  CHECK(a[3].id == "s001");
  auto c = synthesize_sources(2, 2, 8);
  bool differs = false;
  for (std::size_t i = 0; i < 4; ++i) differs |= a[i].source != c[i].source;
  CHECK(differs);

  CHECK_THROWS_AS(generate_synthetic(1, 5, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic(3, 1, 0), std::invalid_argument);

  auto corpus = generate_synthetic(10, 6, 0);
  CHECK(corpus.classes.size() == 10);
  CHECK(corpus.solution_count() == 60);
  CHECK(find_corpus_violation(corpus).empty());
}

TEST_CASE("synthetic classes share tokens: mean between-class baseline similarity >= 0.8") {
  auto corpus = generate_synthetic(6, 60, 0);
  std::vector<SbtSequence> seqs;
  for (const auto& cls : corpus.classes) {
    for (const auto& s : cls.solutions) seqs.push_back(sbt_serialize(s.tree));
  }
  auto vocab = build_vocab(count_tokens(seqs));
  std::vector<std::vector<TokenHistogram>> hist(corpus.classes.size());
  for (std::size_t k = 0; k < corpus.classes.size(); ++k) {
    for (const auto& s : corpus.classes[k].solutions) hist[k].push_back(bag_of_tokens(vocab, sbt_serialize(s.tree)));
  }
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t a = 0; a < hist.size(); ++a) {
    for (std::size_t b = a + 1; b < hist.size(); ++b) {
      for (std::size_t i = 0; i < hist[a].size(); i += 6) {
        for (std::size_t j = 0; j < hist[b].size(); j += 6) {
          total += baseline_similarity(hist[a][i], hist[b][j]);
          ++n;
        }
      }
    }
  }
  CHECK(total / double(n) >= 0.8);
}
