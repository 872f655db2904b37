#include "codetwin/vocab.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "codetwin/errors.hpp"
#include "codetwin/textio.hpp"

namespace codetwin {

namespace {

constexpr std::string_view kVocabHeader = "codetwin-vocab v1";

bool ranks_before(const VocabEntry& a, const VocabEntry& b) {
  if (a.count != b.count) return a.count > b.count;
  return a.label < b.label;
}

double parse_fraction(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw FormatError("bad " + std::string(what) + " value '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<VocabEntry> entries, double coverage_target,
                       double achieved_coverage)
    : entries_(std::move(entries)),
      coverage_target_(coverage_target),
      achieved_coverage_(achieved_coverage) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto [it, inserted] =
        index_.emplace(entries_[i].label, static_cast<TokenId>(i) + kNumSpecials);
    if (!inserted) throw FormatError("duplicate vocabulary label '" + entries_[i].label + "'");
  }
}

std::optional<TokenId> Vocabulary::find(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id_of(std::string_view label) const { return find(label).value_or(kUnkId); }

std::string Vocabulary::label_of(TokenId id) const {
  static const char* const specials[] = {"<PAD>", "<UNK>", "<SOS>", "<EOS>"};
  if (id < 0 || static_cast<std::size_t>(id) >= size()) throw IndexError("token id out of range");
  if (id < kNumSpecials) return specials[id];
  return entries_[static_cast<std::size_t>(id - kNumSpecials)].label;
}

TokenCounts count_tokens(const std::vector<SbtSequence>& corpus) {
  TokenCounts counts;
  for (const auto& seq : corpus)
    for (const auto& token : seq) ++counts[token];
  return counts;
}

void merge_counts(TokenCounts& into, const TokenCounts& from) {
  for (const auto& [label, n] : from) into[label] += n;
}

Vocabulary build_vocab(const TokenCounts& counts, double coverage_target) {
  if (!(coverage_target > 0.0 && coverage_target <= 1.0)) {
    throw std::invalid_argument("coverage_target must be in (0, 1]");
  }
  std::uint64_t total = 0;
  std::vector<VocabEntry> ranked;
  ranked.reserve(counts.size());
  for (const auto& [label, n] : counts) {
    total += n;
    if (n > 0) ranked.push_back({label, n});
  }
  if (total == 0) throw EmptyCorpus("cannot build a vocabulary from zero tokens");
  std::sort(ranked.begin(), ranked.end(), ranks_before);

  // Integer comparison: covered / total >= target  <=>  covered >= target * total.
  // The product is computed in long double to keep exact fractions like 8/10
  // from falling just short.
  const long double needed = static_cast<long double>(coverage_target) * total;
  std::uint64_t covered = 0;
  std::size_t keep = 0;
  while (keep < ranked.size() && static_cast<long double>(covered) < needed - 1e-9L) {
    covered += ranked[keep++].count;
  }
  std::vector<VocabEntry> entries(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep));

  for (std::string_view delim : {kSbtOpen, kSbtClose}) {
    bool present = std::any_of(entries.begin(), entries.end(),
                               [&](const VocabEntry& e) { return e.label == delim; });
    if (present) continue;
    auto it = counts.find(std::string(delim));
    std::uint64_t n = it == counts.end() ? 0 : it->second;
    entries.push_back({std::string(delim), n});
    covered += n;
  }
  // Appended delimiters rank after the prefix; keep the suffix ordered too.
  std::stable_sort(entries.begin() + static_cast<std::ptrdiff_t>(keep), entries.end(), ranks_before);

  double achieved = static_cast<double>(covered) / static_cast<double>(total);
  return Vocabulary(std::move(entries), coverage_target, achieved);
}

std::vector<TokenId> encode_sequence(const Vocabulary& vocab, const SbtSequence& seq,
                                     std::size_t max_len) {
  if (max_len < 3) throw std::invalid_argument("max_len must be at least 3");
  std::size_t body = std::min(seq.size(), max_len - 2);
  std::vector<TokenId> ids;
  ids.reserve(body + 2);
  ids.push_back(kSosId);
  for (std::size_t i = 0; i < body; ++i) ids.push_back(vocab.id_of(seq[i]));
  ids.push_back(kEosId);
  return ids;
}

std::string vocab_to_text(const Vocabulary& vocab) {
  std::string out(kVocabHeader);
  out += " coverage=" + format_double(vocab.coverage_target());
  out += " achieved=" + format_double(vocab.achieved_coverage());
  out += '\n';
  for (const auto& e : vocab.entries()) {
    out += e.label;
    out += '\t';
    out += std::to_string(e.count);
    out += '\n';
  }
  return out;
}

Vocabulary vocab_from_text(std::string_view text) {
  auto lines = split_lines(text);
  if (lines.empty()) throw FormatError("empty vocabulary file");
  std::string_view header = lines[0];
  if (header.substr(0, kVocabHeader.size()) != kVocabHeader) {
    throw FormatError("missing 'codetwin-vocab v1' header");
  }
  std::optional<double> target, achieved;
  std::istringstream fields{std::string(header.substr(kVocabHeader.size()))};
  std::string field;
  while (fields >> field) {
    auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError("bad header field '" + field + "'");
    std::string key = field.substr(0, eq);
    std::string_view val = std::string_view(field).substr(eq + 1);
    if (key == "coverage") {
      target = parse_fraction(val, "coverage");
    } else if (key == "achieved") {
      achieved = parse_fraction(val, "achieved");
    } else {
      throw FormatError("unknown header field '" + key + "'");
    }
  }
  if (!target || !(*target > 0.0 && *target <= 1.0)) throw FormatError("header lacks a valid coverage");

  std::vector<VocabEntry> entries;
  std::set<std::string, std::less<>> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (line.empty()) continue;
    std::string where = " on line " + std::to_string(i + 1);
    auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) throw FormatError("malformed entry" + where);
    std::string_view label = line.substr(0, tab);
    std::string_view count_text = line.substr(tab + 1);
    std::uint64_t count = 0;
    auto [ptr, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
    if (ec != std::errc() || ptr != count_text.data() + count_text.size()) {
      throw FormatError("malformed count" + where);
    }
    if (!seen.insert(std::string(label)).second) {
      throw FormatError("duplicate label '" + std::string(label) + "'" + where);
    }
    if (!entries.empty() && count > entries.back().count) throw FormatError("counts not descending" + where);
    entries.push_back({std::string(label), count});
  }
  if (!seen.count(kSbtOpen) || !seen.count(kSbtClose)) {
    throw FormatError("vocabulary lacks the '(' and ')' delimiters");
  }
  return Vocabulary(std::move(entries), *target, achieved.value_or(0.0));
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  write_file(path, vocab_to_text(vocab));
}

Vocabulary load_vocab(const std::string& path) { return vocab_from_text(read_file(path)); }

std::string fingerprint_bytes(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string vocab_fingerprint(const Vocabulary& vocab) { return fingerprint_bytes(vocab_to_text(vocab)); }

}  // namespace codetwin
