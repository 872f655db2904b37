#pragma once

// Bag-of-tokens baseline: an order-free histogram of vocabulary ids.

#include <cstdint>
#include <vector>

#include "codetwin/sbt.hpp"
#include "codetwin/vocab.hpp"

namespace codetwin {

/// counts[id] over the whole vocabulary, specials included.
using TokenHistogram = std::vector<std::uint64_t>;

/// Counts each label under its id; unknown labels land in the UNK bucket.
/// No SOS/EOS are added and no truncation is applied.
TokenHistogram bag_of_tokens(const Vocabulary& vocab, const SbtSequence& seq);

/// Cosine of two count vectors, in [0, 1]. Throws ZeroVector on an all-zero
/// histogram and ShapeMismatch on differing lengths.
double baseline_similarity(const TokenHistogram& h1, const TokenHistogram& h2);

std::vector<double> histogram_as_vector(const TokenHistogram& h);

}  // namespace codetwin
