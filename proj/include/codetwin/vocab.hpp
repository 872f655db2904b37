#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "codetwin/sbt.hpp"

namespace codetwin {

using TokenId = std::int32_t;
using TokenCounts = std::map<std::string, std::uint64_t>;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kSosId = 2;
inline constexpr TokenId kEosId = 3;
inline constexpr TokenId kNumSpecials = 4;

inline constexpr double kDefaultCoverage = 0.85;
inline constexpr std::size_t kDefaultMaxLen = 500;

struct VocabEntry {
  std::string label;
  std::uint64_t count = 0;
  bool operator==(const VocabEntry&) const = default;
};

/// Token -> id map. Ids 0..3 are PAD, UNK, SOS, EOS; entries follow in
/// descending count with lexicographic tie-break.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<VocabEntry> entries, double coverage_target, double achieved_coverage);

  const std::vector<VocabEntry>& entries() const { return entries_; }
  double coverage_target() const { return coverage_target_; }
  double achieved_coverage() const { return achieved_coverage_; }

  /// Number of ids, specials included.
  std::size_t size() const { return entries_.size() + kNumSpecials; }

  /// Id of a label, UNK when absent.
  TokenId id_of(std::string_view label) const;
  std::optional<TokenId> find(std::string_view label) const;
  /// Label of an id; specials render as <PAD>, <UNK>, <SOS>, <EOS>.
  std::string label_of(TokenId id) const;

  bool operator==(const Vocabulary& other) const {
    return entries_ == other.entries_ && coverage_target_ == other.coverage_target_ &&
           achieved_coverage_ == other.achieved_coverage_;
  }

 private:
  std::vector<VocabEntry> entries_;
  std::unordered_map<std::string, TokenId> index_;
  double coverage_target_ = kDefaultCoverage;
  double achieved_coverage_ = 0.0;
};

TokenCounts count_tokens(const std::vector<SbtSequence>& corpus);
void merge_counts(TokenCounts& into, const TokenCounts& from);

/// Smallest frequency-ranked prefix covering `coverage_target` of all token
/// occurrences; "(" and ")" are appended if the prefix lacks them.
Vocabulary build_vocab(const TokenCounts& counts, double coverage_target = kDefaultCoverage);

/// [SOS] ids... [EOS], body truncated so the result never exceeds max_len.
std::vector<TokenId> encode_sequence(const Vocabulary& vocab, const SbtSequence& seq,
                                     std::size_t max_len = kDefaultMaxLen);

std::string vocab_to_text(const Vocabulary& vocab);
Vocabulary vocab_from_text(std::string_view text);
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

/// FNV-1a 64-bit hash of the serialized vocab, hex encoded.
std::string vocab_fingerprint(const Vocabulary& vocab);
std::string fingerprint_bytes(std::string_view bytes);

}  // namespace codetwin
