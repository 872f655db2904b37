#include "codetwin/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "codetwin/errors.hpp"
#include "codetwin/textio.hpp"

namespace codetwin {

namespace fs = std::filesystem;

std::size_t LabeledCorpus::solution_count() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.solutions.size();
  return n;
}

std::vector<std::size_t> LabeledCorpus::class_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& c : classes) out.push_back(c.solutions.size());
  return out;
}

std::string find_corpus_violation(const LabeledCorpus& corpus) {
  std::set<std::string> labels;
  for (const auto& c : corpus.classes) {
    if (!labels.insert(c.label).second) return "duplicate class label '" + c.label + "'";
    std::set<std::string> ids;
    for (const auto& s : c.solutions) {
      if (!ids.insert(s.id).second) return "duplicate solution id '" + s.id + "' in class '" + c.label + "'";
      if (s.tree.kind != NodeKind::Module) return "solution '" + s.id + "' is not rooted at a Module";
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Loading and splitting

LoadResult load_corpus(const std::string& root_dir, bool use_json) {
  if (!fs::is_directory(root_dir)) throw Error("corpus directory '" + root_dir + "' does not exist");
  const std::string suffix = use_json ? ".ast.json" : ".py";
  LoadResult result;
  result.corpus.provenance = "directory " + root_dir;

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root_dir)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name.size() > suffix.size() && name.ends_with(suffix)) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());

    LabeledClass cls{dir.filename().string(), {}};
    for (const auto& file : files) {
      const std::string name = file.filename().string();
      try {
        const std::string text = read_file(file.string());
        AstNode tree = use_json ? ast_from_json(text) : parse_source(text);
        cls.solutions.push_back({name.substr(0, name.size() - suffix.size()), wrap_in_function(tree, "solution")});
      } catch (const ParseError& e) {
        result.report.push_back("SKIP " + file.string() + " line " + std::to_string(e.line()) + ": " + e.what());
      } catch (const Error& e) {
        result.report.push_back("SKIP " + file.string() + " " + e.what());
      }
    }
    if (cls.solutions.empty()) {
      result.warnings.push_back("class '" + cls.label + "' has no valid solutions and was dropped");
      continue;
    }
    result.corpus.classes.push_back(std::move(cls));
  }
  return result;
}

CorpusSplit split_corpus(const LabeledCorpus& corpus, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test_fraction must be in (0, 1)");
  for (const auto& c : corpus.classes) {
    if (c.solutions.size() < 2) {
      throw TooFewSolutions("class '" + c.label + "' has " + std::to_string(c.solutions.size()) +
                            " solution(s), at least 2 are needed to split");
    }
  }
  CorpusSplit split;
  split.seed = seed;
  split.train.provenance = corpus.provenance + " [train]";
  split.test.provenance = corpus.provenance + " [test]";
  nn::Rng rng(seed);
  for (const auto& c : corpus.classes) {
    const std::size_t n = c.solutions.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx.begin(), idx.end());
    const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n) - 1e-12));
    std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    LabeledClass tr{c.label, {}}, te{c.label, {}};
    for (auto i : train) tr.solutions.push_back(c.solutions[i]);
    for (auto i : test) te.solutions.push_back(c.solutions[i]);
    split.train.classes.push_back(std::move(tr));
    split.test.classes.push_back(std::move(te));
  }
  return split;
}

CorpusSplit hold_out_classes(const LabeledCorpus& corpus, const std::vector<std::size_t>& held_out) {
  CorpusSplit split;
  split.train.provenance = corpus.provenance + " [seen classes]";
  split.test.provenance = corpus.provenance + " [held-out classes]";
  std::set<std::size_t> out(held_out.begin(), held_out.end());
  for (auto i : out) {
    if (i >= corpus.classes.size()) throw IndexError("held-out class index " + std::to_string(i) + " out of range");
  }
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    (out.count(c) ? split.test : split.train).classes.push_back(corpus.classes[c]);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Transformations

namespace {

const std::set<std::string, std::less<>> kBuiltins{"range", "len", "abs", "min",  "max",
                                                   "str",   "int", "sum", "True", "False", "None"};

// Half-open range of statement children for block-carrying nodes.
std::pair<std::size_t, std::size_t> statement_range(const AstNode& n) {
  const std::size_t size = n.children.size();
  switch (n.kind) {
    case NodeKind::Module:
    case NodeKind::Else:
      return {0, size};
    case NodeKind::FunctionDef:
    case NodeKind::While:
      return {1, size};
    case NodeKind::For:
      return {2, size};
    case NodeKind::If:
      return {1, size > 1 && n.children.back().kind == NodeKind::Else ? size - 1 : size};
    default:
      return {0, 0};
  }
}

struct Site {
  AstNode* block;
  std::size_t index;
};

void collect_statements(AstNode& n, std::vector<Site>& out) {
  auto [lo, hi] = statement_range(n);
  for (std::size_t i = lo; i < hi; ++i) out.push_back({&n, i});
  for (auto& c : n.children) collect_statements(c, out);
}

void collect_names(const AstNode& n, std::set<std::string>& out) {
  if (n.kind == NodeKind::Name || n.kind == NodeKind::Arg || n.kind == NodeKind::FunctionDef) out.insert(*n.value);
  for (const auto& c : n.children) collect_names(c, out);
}

void collect_function_names(const AstNode& n, std::set<std::string>& out) {
  if (n.kind == NodeKind::FunctionDef) out.insert(*n.value);
  for (const auto& c : n.children) collect_function_names(c, out);
}

std::string fresh_name(const AstNode& tree, nn::Rng& rng) {
  std::set<std::string> used;
  collect_names(tree, used);
  std::vector<std::string> free;
  for (const auto& name : identifier_pool()) {
    if (!used.count(name)) free.push_back(name);
  }
  if (!free.empty()) return free[rng.uniform_int(free.size())];
  for (std::size_t i = 0;; ++i) {
    std::string name = "c" + std::to_string(i);
    if (!used.count(name)) return name;
  }
}

// Read/write summary of one statement for the swap rewrite.
struct Effects {
  std::set<std::string> reads;
  std::set<std::string> writes;
  bool barrier = false;  // return, def, subscript store or non-builtin call
};

void expr_effects(const AstNode& e, Effects& fx) {
  if (e.kind == NodeKind::Name) {
    fx.reads.insert(*e.value);
    return;
  }
  if (e.kind == NodeKind::Call) {
    const AstNode& f = e.children.at(0);
    if (f.kind != NodeKind::Name || !kBuiltins.count(*f.value)) fx.barrier = true;
    for (std::size_t i = 1; i < e.children.size(); ++i) expr_effects(e.children[i], fx);
    return;
  }
  for (const auto& c : e.children) expr_effects(c, fx);
}

void stmt_effects(const AstNode& s, Effects& fx) {
  switch (s.kind) {
    case NodeKind::Return:
    case NodeKind::FunctionDef:
      fx.barrier = true;
      return;
    case NodeKind::Assign:
    case NodeKind::AugAssign: {
      const AstNode& target = s.children.at(0);
      if (target.kind != NodeKind::Name) {
        fx.barrier = true;
        return;
      }
      fx.writes.insert(*target.value);
      if (s.kind == NodeKind::AugAssign) fx.reads.insert(*target.value);
      expr_effects(s.children.at(1), fx);
      return;
    }
    case NodeKind::Expr:
      expr_effects(s.children.at(0), fx);
      return;
    case NodeKind::For:
      fx.writes.insert(*s.children.at(0).value);
      expr_effects(s.children.at(1), fx);
      break;
    case NodeKind::If:
    case NodeKind::While:
      expr_effects(s.children.at(0), fx);
      break;
    default:
      break;
  }
  auto [lo, hi] = statement_range(s);
  for (std::size_t i = lo; i < hi; ++i) stmt_effects(s.children[i], fx);
  if (s.kind == NodeKind::If && hi < s.children.size()) stmt_effects(s.children.back(), fx);
}

bool intersects(const std::set<std::string>& a, const std::set<std::string>& b) {
  for (const auto& x : a) {
    if (b.count(x)) return true;
  }
  return false;
}

bool independent(const AstNode& s1, const AstNode& s2) {
  Effects a, b;
  stmt_effects(s1, a);
  stmt_effects(s2, b);
  if (a.barrier || b.barrier) return false;
  return !intersects(a.writes, b.reads) && !intersects(a.writes, b.writes) && !intersects(b.writes, a.reads);
}

bool assigns(const AstNode& n, const std::string& name) {
  if ((n.kind == NodeKind::Assign || n.kind == NodeKind::AugAssign) && n.children.at(0).kind == NodeKind::Name &&
      *n.children[0].value == name) {
    return true;
  }
  if (n.kind == NodeKind::For && *n.children.at(0).value == name) return true;
  if (n.kind == NodeKind::FunctionDef) return false;  // separate scope
  for (const auto& c : n.children) {
    if (assigns(c, name)) return true;
  }
  return false;
}

bool assigns_in_body(const AstNode& loop, const std::string& name) {
  auto [lo, hi] = statement_range(loop);
  for (std::size_t i = lo; i < hi; ++i) {
    if (assigns(loop.children[i], name)) return true;
  }
  return false;
}

bool is_call_to(const AstNode& e, std::string_view fn, std::size_t nargs) {
  return e.kind == NodeKind::Call && e.children.size() == nargs + 1 && e.children[0].kind == NodeKind::Name &&
         *e.children[0].value == fn;
}

// `for i in range(E)` with an E that the body cannot change.
bool for_to_while_site(const AstNode& s) {
  if (s.kind != NodeKind::For || !is_call_to(s.children.at(1), "range", 1)) return false;
  const std::string& var = *s.children[0].value;
  if (assigns_in_body(s, var)) return false;
  const AstNode& bound = s.children[1].children[1];
  if (bound.kind == NodeKind::Num) return true;
  if (bound.kind == NodeKind::Name) return !kBuiltins.count(*bound.value) && !assigns_in_body(s, *bound.value);
  if (is_call_to(bound, "len", 1) && bound.children[1].kind == NodeKind::Name) {
    return !assigns_in_body(s, *bound.children[1].value);
  }
  return false;
}

std::vector<AstNode> for_as_while(const AstNode& loop, const std::string& counter) {
  const AstNode& var = loop.children[0];
  const AstNode& bound = loop.children[1].children[1];
  AstNode c = make_node(NodeKind::Name, counter);
  AstNode w = make_node(NodeKind::While, {make_node(NodeKind::Compare, "Lt", {c, bound})});
  w.children.push_back(make_node(NodeKind::Assign, {var, c}));
  for (std::size_t i = 2; i < loop.children.size(); ++i) w.children.push_back(loop.children[i]);
  w.children.push_back(make_node(NodeKind::AugAssign, "Add", {c, make_node(NodeKind::Num, "1")}));
  return {make_node(NodeKind::Assign, {c, make_node(NodeKind::Num, "0")}), std::move(w)};
}

}  // namespace

std::string_view transform_name(TransformKind kind) {
  switch (kind) {
    case TransformKind::RenameIdentifiers: return "rename_identifiers";
    case TransformKind::ForToWhile: return "for_to_while";
    case TransformKind::SwapIndependentStmts: return "swap_independent_stmts";
    case TransformKind::WrapRedundantIfTrue: return "wrap_redundant_if_true";
  }
  return "?";
}

std::vector<std::string> user_identifiers(const AstNode& ast) {
  std::set<std::string> names, functions;
  collect_names(ast, names);
  collect_function_names(ast, functions);
  std::vector<std::string> out;
  for (const auto& n : names) {
    if (!kBuiltins.count(n) && !functions.count(n)) out.push_back(n);
  }
  return out;
}

AstNode rename_identifiers(const AstNode& ast, const std::map<std::string, std::string>& map) {
  AstNode out = ast;
  if ((out.kind == NodeKind::Name || out.kind == NodeKind::Arg || out.kind == NodeKind::FunctionDef) && out.value) {
    if (auto it = map.find(*out.value); it != map.end()) out.value = it->second;
  }
  for (auto& c : out.children) c = rename_identifiers(c, map);
  return out;
}

TransformResult transform(const AstNode& ast, TransformKind kind, nn::Rng& rng) {
  TransformResult result{ast, {}, {}};
  switch (kind) {
    case TransformKind::RenameIdentifiers: {
      const auto names = user_identifiers(ast);
      if (names.empty()) throw NotApplicable("no identifiers to rename");
      std::set<std::string> fixed;  // names a rename must not collide with
      collect_function_names(ast, fixed);
      std::vector<std::string> targets;
      for (const auto& p : identifier_pool()) {
        if (!fixed.count(p)) targets.push_back(p);
      }
      for (std::size_t i = 0; targets.size() < names.size(); ++i) {
        std::string extra = "v" + std::to_string(i);
        if (!fixed.count(extra) && std::find(targets.begin(), targets.end(), extra) == targets.end()) {
          targets.push_back(extra);
        }
      }
      rng.shuffle(targets.begin(), targets.end());
      for (std::size_t i = 0; i < names.size(); ++i) result.renames[names[i]] = targets[i];
      result.tree = rename_identifiers(ast, result.renames);
      return result;
    }
    case TransformKind::ForToWhile: {
      std::vector<Site> sites, all;
      collect_statements(result.tree, all);
      for (const auto& s : all) {
        if (for_to_while_site(s.block->children[s.index])) sites.push_back(s);
      }
      if (sites.empty()) throw NotApplicable("no 'for ... in range(...)' loop with a fixed bound");
      const Site site = sites[rng.uniform_int(sites.size())];
      const std::string counter = fresh_name(result.tree, rng);
      auto replacement = for_as_while(site.block->children[site.index], counter);
      auto& kids = site.block->children;
      kids.erase(kids.begin() + static_cast<std::ptrdiff_t>(site.index));
      kids.insert(kids.begin() + static_cast<std::ptrdiff_t>(site.index), replacement.begin(), replacement.end());
      result.introduced.push_back(counter);
      return result;
    }
    case TransformKind::SwapIndependentStmts: {
      std::vector<Site> all, sites;
      collect_statements(result.tree, all);
      for (const auto& s : all) {
        auto [lo, hi] = statement_range(*s.block);
        if (s.index + 1 < hi && independent(s.block->children[s.index], s.block->children[s.index + 1])) {
          sites.push_back(s);
        }
        (void)lo;
      }
      if (sites.empty()) throw NotApplicable("no adjacent independent statements");
      const Site site = sites[rng.uniform_int(sites.size())];
      std::swap(site.block->children[site.index], site.block->children[site.index + 1]);
      return result;
    }
    case TransformKind::WrapRedundantIfTrue: {
      std::vector<Site> all, sites;
      collect_statements(result.tree, all);
      for (const auto& s : all) {
        if (s.block->children[s.index].kind != NodeKind::FunctionDef) sites.push_back(s);
      }
      if (sites.empty()) throw NotApplicable("no statement to wrap");
      const Site site = sites[rng.uniform_int(sites.size())];
      AstNode& stmt = site.block->children[site.index];
      stmt = make_node(NodeKind::If, {make_node(NodeKind::Name, "True"), std::move(stmt)});
      return result;
    }
  }
  throw NotApplicable("unknown transformation");
}

// ---------------------------------------------------------------------------
// Synthetic generator

const std::vector<std::string>& identifier_pool() {
  static const std::vector<std::string> pool{"data", "n",    "k",   "total", "result", "count", "best", "acc",
                                             "idx",  "i",    "j",   "x",     "y",      "tmp",   "out",  "flag",
                                             "cur",  "prev", "val", "item",  "res",    "step",  "lim",  "s"};
  return pool;
}

namespace {

// Fills {A}.. {F} with distinct pool names (inputs data/n/k stay fixed in
// the base program), {K1}.. {K3} with small shared constants, {OP} with an
// arithmetic operator and {CMP} with a comparison.
std::string instantiate(std::string tmpl, nn::Rng& rng) {
  std::vector<std::string> locals;
  for (const auto& name : identifier_pool()) {
    if (name != "data" && name != "n" && name != "k") locals.push_back(name);
  }
  rng.shuffle(locals.begin(), locals.end());
  static const char* constants[] = {"1", "2", "3", "5"};
  static const char* ops[] = {"+", "-", "*"};
  static const char* cmps[] = {">", "<", ">=", "<="};
  auto replace_all = [&](const std::string& key, const std::string& value) {
    for (std::size_t pos; (pos = tmpl.find(key)) != std::string::npos;) tmpl.replace(pos, key.size(), value);
  };
  const char* slots[] = {"{A}", "{B}", "{C}", "{D}", "{E}", "{F}"};
  for (std::size_t i = 0; i < 6; ++i) replace_all(slots[i], locals[i]);
  replace_all("{K1}", constants[rng.uniform_int(4)]);
  replace_all("{K2}", constants[rng.uniform_int(4)]);
  replace_all("{K3}", constants[rng.uniform_int(4)]);
  replace_all("{OP}", ops[rng.uniform_int(3)]);
  replace_all("{CMP}", cmps[rng.uniform_int(4)]);
  return tmpl;
}

const char* const kSchemata[kSchemaCount] = {
    // accumulation loop
    "{A} = 0\n"
    "{B} = {K1}\n"
    "for {C} in range(len(data)):\n"
    "    {A} = {A} + data[{C}] * {B}\n"
    "{A} = {A} {OP} k\n",
    // conditional max
    "{A} = data[0]\n"
    "{B} = 0\n"
    "for {C} in range(len(data)):\n"
    "    if data[{C}] > {A}:\n"
    "        {A} = data[{C}]\n"
    "        {B} = {C}\n"
    "{A} = {A} {OP} {K1}\n",
    // nested loop sum
    "{A} = 0\n"
    "for {B} in range(n):\n"
    "    for {C} in range({K2} + k):\n"
    "        {A} = {A} + {B} * {C}\n"
    "{D} = {A} {OP} {K1}\n",
    // string building
    "{A} = ''\n"
    "for {B} in range(n):\n"
    "    {A} = {A} + str({B})\n"
    "    if {B} % {K1} == 0:\n"
    "        {A} = {A} + '-'\n"
    "{C} = len({A})\n",
    // filtering
    "{A} = []\n"
    "for {B} in range(len(data)):\n"
    "    if data[{B}] {CMP} k:\n"
    "        {A} = {A} + [data[{B}]]\n"
    "{C} = len({A}) {OP} {K1}\n",
    // counting
    "{A} = 0\n"
    "{B} = 0\n"
    "for {C} in range(len(data)):\n"
    "    if data[{C}] % {K1} == 0:\n"
    "        {A} += 1\n"
    "    else:\n"
    "        {B} += 1\n"
    "{D} = {A} - {B}\n",
    // early-return search
    "{A} = -1\n"
    "{B} = k {OP} {K1}\n"
    "for {C} in range(len(data)):\n"
    "    if data[{C}] == {B}:\n"
    "        {A} = {C}\n"
    "        return {A}\n"
    "return {A}\n",
    // arithmetic pipeline
    "{A} = n * {K1}\n"
    "{B} = {A} + k\n"
    "{C} = {B} % {K2}\n"
    "{D} = {C} * {C} - {A}\n"
    "{E} = {D} {OP} {K3}\n",
};

constexpr TransformKind kExtraTransforms[] = {TransformKind::ForToWhile, TransformKind::SwapIndependentStmts,
                                              TransformKind::WrapRedundantIfTrue};

AstNode random_variant(const AstNode& base, nn::Rng& rng) {
  AstNode tree = transform(base, TransformKind::RenameIdentifiers, rng).tree;
  const auto extra = rng.uniform_int(4);
  for (std::uint64_t t = 0; t < extra; ++t) {
    try {
      tree = transform(tree, kExtraTransforms[rng.uniform_int(3)], rng).tree;
    } catch (const NotApplicable&) {
    }
  }
  return tree;
}

std::string two_digits(std::size_t i, std::size_t width) {
  std::string s = std::to_string(i);
  return std::string(s.size() < width ? width - s.size() : 0, '0') + s;
}

}  // namespace

std::string schema_source(std::size_t schema, nn::Rng& rng) {
  if (schema >= kSchemaCount) throw IndexError("schema index " + std::to_string(schema) + " out of range");
  return instantiate(kSchemata[schema], rng);
}

std::vector<SyntheticSource> synthesize_sources(std::size_t k_classes, std::size_t per_class, std::uint64_t seed) {
  if (k_classes < 2) throw std::invalid_argument("synthetic corpus needs at least 2 classes");
  if (per_class < 2) throw std::invalid_argument("synthetic corpus needs at least 2 solutions per class");
  std::vector<SyntheticSource> out;
  const std::size_t label_width = std::max<std::size_t>(2, std::to_string(k_classes - 1).size());
  const std::size_t id_width = std::max<std::size_t>(3, std::to_string(per_class - 1).size());
  for (std::size_t c = 0; c < k_classes; ++c) {
    nn::Rng rng(nn::derive_seed(seed, "class" + std::to_string(c)));
    const AstNode base = parse_source(schema_source(c % kSchemaCount, rng));
    for (std::size_t v = 0; v < per_class; ++v) {
      out.push_back({"class" + two_digits(c, label_width), "s" + two_digits(v, id_width),
                     to_source(random_variant(base, rng))});
    }
  }
  return out;
}

LabeledCorpus generate_synthetic(std::size_t k_classes, std::size_t per_class, std::uint64_t seed) {
  LabeledCorpus corpus;
  corpus.provenance = "synthetic classes=" + std::to_string(k_classes) + " per_class=" + std::to_string(per_class) +
                      " seed=" + std::to_string(seed);
  for (const auto& s : synthesize_sources(k_classes, per_class, seed)) {
    if (corpus.classes.empty() || corpus.classes.back().label != s.label) corpus.classes.push_back({s.label, {}});
    corpus.classes.back().solutions.push_back({s.id, wrap_in_function(parse_source(s.source), "solution")});
  }
  return corpus;
}

}  // namespace codetwin
