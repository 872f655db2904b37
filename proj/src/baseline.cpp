#include "codetwin/baseline.hpp"

#include "codetwin/siamese.hpp"

namespace codetwin {

TokenHistogram bag_of_tokens(const Vocabulary& vocab, const SbtSequence& seq) {
  TokenHistogram h(vocab.size(), 0);
  for (const auto& label : seq) ++h[static_cast<std::size_t>(vocab.id_of(label))];
  return h;
}

std::vector<double> histogram_as_vector(const TokenHistogram& h) { return {h.begin(), h.end()}; }

double baseline_similarity(const TokenHistogram& h1, const TokenHistogram& h2) {
  const auto a = histogram_as_vector(h1), b = histogram_as_vector(h2);
  return cosine_similarity<double>(a, b);
}

}  // namespace codetwin
