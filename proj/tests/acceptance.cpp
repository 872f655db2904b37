// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. The training experiments run on a single thread.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "codetwin/baseline.hpp"
#include "codetwin/corpus.hpp"
#include "codetwin/errors.hpp"
#include "codetwin/evalkit.hpp"
#include "codetwin/pretrain.hpp"
#include "codetwin/sbt.hpp"
#include "codetwin/siamese.hpp"
#include "codetwin/vocab.hpp"
#include "support.hpp"
#include "transform_oracle.hpp"

using namespace codetwin;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-3;
constexpr double kGradBudgetSec = 60.0;
constexpr double kSbtBudgetSec = 10.0;
constexpr double kAucTol = 1e-9;
constexpr std::size_t kMinTransforms = 500;
constexpr double kProposedMin = 0.90;
constexpr double kMarginOverBaseline = 0.10;
constexpr double kSeparationBudgetSec = 15 * 60.0;
constexpr double kHeldOutClassMin = 0.75;
constexpr double kCoverage = 0.85;

// Experiment protocol.
constexpr std::uint64_t kSeed = 0;
constexpr std::size_t kClasses = 6, kPerClass = 60;
constexpr std::size_t kPretrainEpochs = 20, kSiameseEpochs = 40, kProbeEpochs = 5;
constexpr std::size_t kPairsPerEpoch = 500;
constexpr std::size_t kEvalPairs = kDefaultEvalPairs;

int failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::size_t node_count(const AstNode& n) {
  std::size_t c = 1;
  for (const auto& ch : n.children) c += node_count(ch);
  return c;
}

// --- criterion 1 ---------------------------------------------------------

void gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  EncoderConfig cfg{20, 8, 8, 64};
  nn::Rng rng(nn::derive_seed(kSeed, "gradcheck"));
  nn::ParamStore<double> params;
  init_encoder(params, cfg, rng);
  init_calibration(params, {1.2, -0.3});
  auto random_seq = [&] {
    IdSequence s{kSosId};
    const auto len = 1 + rng.uniform_int(8);
    for (std::uint64_t i = 0; i < len; ++i) s.push_back(static_cast<TokenId>(kNumSpecials + rng.uniform_int(16)));
    s.push_back(kEosId);
    return s;
  };
  double worst = 0.0;
  std::string where;
  bool ok = true;
  std::size_t coords = 0;
  for (int y : {0, 1}) {
    PairSample pair{random_seq(), random_seq(), y};
    nn::LossFunction<double> loss = [&](const nn::ParamStore<double>& s, nn::Gradients<double>* g) {
      return pair_loss(s, cfg, pair, g).loss;
    };
    nn::Rng pick(nn::derive_seed(kSeed, "gradcheck-coords") + static_cast<std::uint64_t>(y));
    auto r = nn::gradient_check(loss, params, 1e-5, kGradTol, 100, pick);
    ok = ok && r.passed;
    coords += r.coordinates;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      where = r.worst;
    }
  }
  const double secs = seconds_since(t0);
  report(1, ok && worst <= kGradTol && secs < kGradBudgetSec,
         fmt("max relative error %.3g at %s over %zu coordinates (tol %g), %.2f s", worst, where.c_str(), coords,
             kGradTol, secs));
}

// --- criterion 2 ---------------------------------------------------------

void sbt_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  testsupport::RandomTrees gen(nn::derive_seed(kSeed, "sbt"));
  int bad_len = 0, bad_round = 0;
  for (int i = 0; i < 1000; ++i) {
    AstNode tree = gen.module(3);
    auto seq = sbt_serialize(tree);
    if (seq.size() != 4 * node_count(tree)) ++bad_len;
    if (!(sbt_parse(seq) == tree)) ++bad_round;
  }
  const double secs = seconds_since(t0);
  report(2, bad_len == 0 && bad_round == 0 && secs < kSbtBudgetSec,
         fmt("1000 trees, %d length mismatches, %d round-trip mismatches, %.2f s", bad_len, bad_round, secs));
}

// --- criterion 3 ---------------------------------------------------------

double trapezoid(const RocCurve& roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    area += (roc.points[i].fpr - roc.points[i - 1].fpr) * (roc.points[i].tpr + roc.points[i - 1].tpr) / 2.0;
  }
  return area;
}

void auc_oracle() {
  nn::Rng rng(nn::derive_seed(kSeed, "auc"));
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    ScoredPairs sp;
    const auto np = 1 + rng.uniform_int(50), nneg = 1 + rng.uniform_int(50);
    const double levels = static_cast<double>(1 + rng.uniform_int(10));
    for (std::uint64_t k = 0; k < np; ++k) sp.positives.push_back(std::round(rng.uniform() * levels) / levels);
    for (std::uint64_t k = 0; k < nneg; ++k) sp.negatives.push_back(std::round(rng.uniform() * levels) / levels);
    worst = std::max(worst, std::fabs(auc(sp) - trapezoid(roc_curve(sp))));
  }
  report(3, worst <= kAucTol, fmt("500 instances, max |MW - trapezoid| = %.3g (tol %g)", worst, kAucTol));
}

// --- criterion 4 ---------------------------------------------------------

void transformation_soundness() {
  nn::Rng rng(nn::derive_seed(kSeed, "transforms"));
  const TransformKind kinds[] = {TransformKind::RenameIdentifiers, TransformKind::ForToWhile,
                                 TransformKind::SwapIndependentStmts, TransformKind::WrapRedundantIfTrue};
  std::size_t applied = 0, attempts = 0, mismatches = 0;
  std::string first_failure;
  while (applied < 2 * kMinTransforms && attempts < 20000) {
    ++attempts;
    AstNode base = parse_source(schema_source(attempts % kSchemaCount, rng));
    if (rng.uniform_int(2)) base = wrap_in_function(base, "solution");
    TransformResult r;
    try {
      r = transform(base, kinds[attempts % 4], rng);
    } catch (const NotApplicable&) {
      continue;
    }
    ++applied;
    for (int trial = 0; trial < 3; ++trial) {
      auto v = oracle::check(base, r, oracle::sample_inputs(rng));
      if (!v.ok) {
        ++mismatches;
        if (first_failure.empty()) first_failure = std::string(transform_name(kinds[attempts % 4])) + ": " + v.detail;
      }
    }
  }
  report(4, applied >= kMinTransforms && mismatches == 0,
         fmt("%zu instances x 3 inputs, %zu mismatches%s%s", applied, mismatches, first_failure.empty() ? "" : ", first: ",
             first_failure.c_str()));
}

// --- experiments ---------------------------------------------------------

struct Experiment {
  double proposed = 0.0;
  double baseline = 0.0;
  double probe = 0.0;  // held-out AUC after kProbeEpochs Siamese epochs
  double seconds = 0.0;
};

std::vector<SbtSequence> sequences_of(const LabeledCorpus& c) {
  std::vector<SbtSequence> out;
  for (const auto& cls : c.classes) {
    for (const auto& s : cls.solutions) out.push_back(sbt_serialize(s.tree));
  }
  return out;
}

double eval_auc(const Embedder& emb, const LabeledCorpus& corpus) {
  nn::Rng rng(nn::derive_seed(kSeed, "eval"));
  return auc(score_pairs(emb, corpus, kEvalPairs, rng));
}

Experiment run_experiment(const LabeledCorpus& train, const LabeledCorpus& test, bool pretrained,
                          std::size_t siamese_epochs) {
  const auto t0 = std::chrono::steady_clock::now();
  Experiment out;
  const Vocabulary vocab = build_vocab(count_tokens(sequences_of(train)), kCoverage);
  const EncoderConfig cfg{vocab.size(), 64, 128, kDefaultMaxLen};

  nn::ParamStore<float> params;
  nn::Rng init_rng(nn::derive_seed(kSeed, "init"));
  init_encoder(params, cfg, init_rng);
  if (pretrained) {
    init_decoder(params, cfg, init_rng);
    std::vector<IdSequence> ids;
    for (const auto& s : sequences_of(train)) ids.push_back(encode_sequence(vocab, s, cfg.max_len));
    PretrainConfig pc;
    nn::Rng prng(nn::derive_seed(kSeed, "pretrain"));
    for (std::size_t e = 0; e < kPretrainEpochs; ++e) pretrain_epoch(params, cfg, pc, ids, prng);
    params = strip_decoder(params);
  }
  init_calibration(params);

  std::vector<std::vector<IdSequence>> classes;
  for (const auto& cls : train.classes) {
    classes.emplace_back();
    for (const auto& s : cls.solutions) classes.back().push_back(encode_sequence(vocab, sbt_serialize(s.tree), cfg.max_len));
  }
  SiameseConfig sc;
  sc.pairs_per_epoch = kPairsPerEpoch;
  nn::Rng srng(nn::derive_seed(kSeed, "siamese"));
  Embedder proposed = [&](const AstNode& t) {
    auto v = encode(params, cfg, encode_sequence(vocab, sbt_serialize(t), cfg.max_len));
    return std::vector<double>(v.begin(), v.end());
  };
  for (std::size_t e = 0; e < siamese_epochs; ++e) {
    train_epoch(params, cfg, sc, sample_pairs(classes, sc.pairs_per_epoch, srng), srng);
    if (e + 1 == kProbeEpochs) out.probe = eval_auc(proposed, test);
  }
  out.proposed = eval_auc(proposed, test);
  out.seconds = seconds_since(t0);

  Embedder bag = [&](const AstNode& t) { return histogram_as_vector(bag_of_tokens(vocab, sbt_serialize(t))); };
  out.baseline = eval_auc(bag, test);
  return out;
}

// --- criterion 8 ---------------------------------------------------------

void vocabulary_coverage(const LabeledCorpus& train) {
  const auto counts = count_tokens(sequences_of(train));
  const Vocabulary v = build_vocab(counts, kCoverage);
  std::uint64_t total = 0, covered = 0, last = 0;
  for (const auto& [label, n] : counts) total += n;
  std::uint64_t smallest_regular = UINT64_MAX;
  for (const auto& e : v.entries()) {
    covered += counts.count(e.label) ? counts.at(e.label) : 0;
    // Delimiters may be force-included; minimality is about the ranked prefix.
    if (e.label != kSbtOpen && e.label != kSbtClose && e.count <= smallest_regular) {
      smallest_regular = e.count;
      last = e.count;
    }
  }
  const double recount = double(covered) / double(total);
  const bool minimal = double(covered - last) < kCoverage * double(total);
  report(8, recount >= kCoverage && minimal && std::fabs(recount - v.achieved_coverage()) < 1e-12,
         fmt("%zu entries, recounted coverage %.6f (stored %.6f), without last entry %.6f", v.entries().size(), recount,
             v.achieved_coverage(), double(covered - last) / double(total)));
}

}  // namespace

int main() {
  gradient_correctness();
  sbt_oracle();
  auc_oracle();
  transformation_soundness();

  const LabeledCorpus corpus = generate_synthetic(kClasses, kPerClass, kSeed);
  const CorpusSplit split = split_corpus(corpus, 1.0 / 6.0, kSeed);

  const Experiment sep = run_experiment(split.train, split.test, true, kSiameseEpochs);
  report(5, sep.proposed >= kProposedMin && sep.baseline <= sep.proposed - kMarginOverBaseline &&
                sep.seconds < kSeparationBudgetSec,
         fmt("held-out AUC proposed %.6f, baseline %.6f, %.1f s", sep.proposed, sep.baseline, sep.seconds));

  const CorpusSplit held = hold_out_classes(corpus, {kClasses - 2, kClasses - 1});
  const Experiment gen = run_experiment(held.train, held.test, true, kSiameseEpochs);
  report(6, gen.proposed >= kHeldOutClassMin && gen.proposed > gen.baseline,
         fmt("unseen-class AUC proposed %.6f, baseline %.6f", gen.proposed, gen.baseline));

  const Experiment scratch = run_experiment(split.train, split.test, false, kProbeEpochs);
  report(7, sep.probe >= scratch.proposed,
         fmt("after %zu epochs: pretrained %.6f, random init %.6f", kProbeEpochs, sep.probe, scratch.proposed));

  vocabulary_coverage(split.train);

  const Experiment again = run_experiment(split.train, split.test, true, kSiameseEpochs);
  report(9, again.proposed == sep.proposed && again.baseline == sep.baseline && again.probe == sep.probe,
         fmt("repeat: proposed %.17g vs %.17g, baseline %.17g vs %.17g", again.proposed, sep.proposed, again.baseline,
             sep.baseline));

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
