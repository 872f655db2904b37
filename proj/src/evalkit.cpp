#include "codetwin/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "codetwin/encoder.hpp"
#include "codetwin/errors.hpp"
#include "codetwin/siamese.hpp"
#include "codetwin/textio.hpp"

namespace codetwin {

namespace {

void require_sides(const ScoredPairs& sp) {
  if (sp.positives.empty()) throw EmptySide("no positive scores");
  if (sp.negatives.empty()) throw EmptySide("no negative scores");
  for (const auto* side : {&sp.positives, &sp.negatives}) {
    for (double s : *side) {
      if (!std::isfinite(s)) throw std::invalid_argument("scores must be finite");
    }
  }
}

std::vector<std::vector<std::vector<double>>> embed_corpus(const Embedder& embedder, const LabeledCorpus& corpus,
                                                           std::size_t threads) {
  std::vector<std::pair<std::size_t, std::size_t>> flat;
  std::vector<std::vector<std::vector<double>>> out(corpus.classes.size());
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    out[c].resize(corpus.classes[c].solutions.size());
    for (std::size_t i = 0; i < out[c].size(); ++i) flat.emplace_back(c, i);
  }
  parallel_for(flat.size(), threads, [&](std::size_t k) {
    auto [c, i] = flat[k];
    out[c][i] = embedder(corpus.classes[c].solutions[i].tree);
  });
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return cosine_similarity<double>(a, b);
}

}  // namespace

ScoredPairs score_embedded_pairs(const std::vector<std::vector<std::vector<double>>>& embeddings,
                                 std::size_t n_pairs, nn::Rng& rng) {
  std::vector<std::size_t> sizes;
  for (const auto& c : embeddings) sizes.push_back(c.size());
  ScoredPairs sp;
  for (const auto& p : sample_pair_indices(sizes, n_pairs, rng)) {
    const double s = cosine(embeddings[p.class_a][p.item_a], embeddings[p.class_b][p.item_b]);
    (p.y == 1 ? sp.positives : sp.negatives).push_back(s);
  }
  return sp;
}

ScoredPairs score_pairs(const Embedder& embedder, const LabeledCorpus& corpus, std::size_t n_pairs, nn::Rng& rng,
                        std::size_t threads) {
  return score_embedded_pairs(embed_corpus(embedder, corpus, threads), n_pairs, rng);
}

double auc(const ScoredPairs& sp) {
  require_sides(sp);
  std::vector<double> neg = sp.negatives;
  std::sort(neg.begin(), neg.end());
  double wins = 0.0;
  for (double p : sp.positives) {
    auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    auto hi = std::upper_bound(lo, neg.end(), p);
    wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(sp.positives.size()) * static_cast<double>(neg.size()));
}

RocCurve roc_curve(const ScoredPairs& sp) {
  require_sides(sp);
  std::vector<double> pos = sp.positives, neg = sp.negatives;
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::sort(neg.begin(), neg.end(), std::greater<>());
  std::vector<double> thresholds = pos;
  thresholds.insert(thresholds.end(), neg.begin(), neg.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  RocCurve roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  const double np = static_cast<double>(pos.size()), nneg = static_cast<double>(neg.size());
  std::size_t ip = 0, in = 0;
  for (double t : thresholds) {
    while (ip < pos.size() && pos[ip] >= t) ++ip;
    while (in < neg.size() && neg[in] >= t) ++in;
    roc.points.push_back({t, static_cast<double>(in) / nneg, static_cast<double>(ip) / np});
  }
  for (std::size_t k = 1; k < roc.points.size(); ++k) {
    const auto& a = roc.points[k - 1];
    const auto& b = roc.points[k];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return roc;
}

DistanceMatrix distance_matrix(const Embedder& embedder, const LabeledCorpus& corpus, std::size_t per_class_cap,
                               nn::Rng& rng, std::size_t threads) {
  if (corpus.classes.empty()) throw EmptyCorpus("distance matrix of an empty corpus");
  if (per_class_cap < 1) throw std::invalid_argument("per_class_cap must be at least 1");
  LabeledCorpus sampled;
  for (const auto& cls : corpus.classes) {
    std::vector<std::size_t> idx(cls.solutions.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > per_class_cap) {
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(per_class_cap);
      std::sort(idx.begin(), idx.end());
    }
    LabeledClass out{cls.label, {}};
    for (auto i : idx) out.solutions.push_back(cls.solutions[i]);
    sampled.classes.push_back(std::move(out));
  }
  const auto emb = embed_corpus(embedder, sampled, threads);

  DistanceMatrix m;
  std::vector<const std::vector<double>*> rows;
  for (std::size_t c = 0; c < emb.size(); ++c) {
    for (const auto& v : emb[c]) {
      rows.push_back(&v);
      m.labels.push_back(sampled.classes[c].label);
    }
  }
  const std::size_t n = rows.size();
  m.d.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = std::clamp(1.0 - cosine(*rows[i], *rows[j]), 0.0, 2.0);
      m.d[i][j] = m.d[j][i] = d;
    }
  }
  return m;
}

std::string roc_to_csv(const RocCurve& roc) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : roc.points) {
    out += (std::isinf(p.threshold) ? std::string("inf") : format_double(p.threshold)) + "," +
           format_double(p.fpr) + "," + format_double(p.tpr) + "\n";
  }
  return out;
}

std::string matrix_to_csv(const DistanceMatrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.labels.size(); ++i) out += (i ? "," : "") + m.labels[i];
  out += "\n";
  for (const auto& row : m.d) {
    for (std::size_t j = 0; j < row.size(); ++j) out += (j ? "," : "") + format_double(row[j]);
    out += "\n";
  }
  return out;
}

std::string matrix_to_pgm(const DistanceMatrix& m) {
  const std::size_t n = m.d.size();
  std::string out = "P2\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
  for (const auto& row : m.d) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      const long px = std::lround(255.0 * (1.0 - std::min(row[j], 1.0)));
      out += (j ? " " : "") + std::to_string(px);
    }
    out += "\n";
  }
  return out;
}

}  // namespace codetwin
