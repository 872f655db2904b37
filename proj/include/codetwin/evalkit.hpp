#pragma once

// Embedding-quality scoring: balanced pair similarities, ROC/AUC and
// pairwise-distance matrices. Scores are similarities throughout (higher
// means same class); distances are d = 1 - s.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "codetwin/corpus.hpp"

namespace codetwin {

inline constexpr std::size_t kDefaultEvalPairs = 10000;
inline constexpr std::size_t kDefaultPerClassCap = 200;

struct ScoredPairs {
  std::vector<double> positives;
  std::vector<double> negatives;
};

using Embedder = std::function<std::vector<double>(const AstNode&)>;

/// Embeds every solution once (in parallel when threads > 1), then scores
/// pairs drawn with sample_pair_indices by cosine similarity.
ScoredPairs score_pairs(const Embedder& embedder, const LabeledCorpus& corpus, std::size_t n_pairs, nn::Rng& rng,
                        std::size_t threads = 1);

/// Same, over precomputed per-class embeddings.
ScoredPairs score_embedded_pairs(const std::vector<std::vector<std::vector<double>>>& embeddings,
                                 std::size_t n_pairs, nn::Rng& rng);

/// Pr[pos > neg] + ½ Pr[pos = neg], by exact pair counting.
double auc(const ScoredPairs& sp);

struct RocPoint {
  double threshold = 0.0;  // +inf for the first point
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Thresholds: +inf, then every distinct score in descending order. A pair
/// counts as predicted-positive when its score is >= the threshold.
RocCurve roc_curve(const ScoredPairs& sp);

struct DistanceMatrix {
  std::vector<std::string> labels;  // one per row
  std::vector<std::vector<double>> d;
};

/// Up to per_class_cap solutions per class (sampled without replacement,
/// kept in corpus order), grouped by class; entries 1 - cosine in [0, 2].
DistanceMatrix distance_matrix(const Embedder& embedder, const LabeledCorpus& corpus, std::size_t per_class_cap,
                               nn::Rng& rng, std::size_t threads = 1);

std::string roc_to_csv(const RocCurve& roc);
std::string matrix_to_csv(const DistanceMatrix& m);
/// Plain P2 grayscale: 255 at distance 0, 0 at distance >= 1.
std::string matrix_to_pgm(const DistanceMatrix& m);

}  // namespace codetwin
