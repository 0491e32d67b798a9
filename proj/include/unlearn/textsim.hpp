// SPDX-License-Identifier: Apache-2.0
#pragma once

// Entity masking and normalized edit-distance similarity between sentences.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "unlearn/error.hpp"

namespace unlearn::textsim {

inline constexpr std::string_view kMaskToken = "{X}";

using Span = std::pair<std::size_t, std::size_t>;  // [start, end) into the original

/// A sentence with named entities replaced by kMaskToken.
///
/// Build through `from_spans` so that the invariants hold: spans are sorted,
/// non-overlapping, lie inside `original`, and `masked` carries exactly one
/// mask token per span.
struct MaskedSentence {
  std::string original;
  std::string masked;
  std::vector<Span> mask_spans;

  static MaskedSentence from_spans(std::string original, std::vector<Span> spans) {
    std::sort(spans.begin(), spans.end());
    std::size_t cursor = 0;
    std::string masked;
    masked.reserve(original.size());
    for (const auto& [start, end] : spans) {
      require(start < end && end <= original.size(), ErrorKind::InvalidArgument,
              "mask span out of range");
      require(start >= cursor, ErrorKind::InvalidArgument, "mask spans overlap");
      masked.append(original, cursor, start - cursor);
      masked.append(kMaskToken);
      cursor = end;
    }
    masked.append(original, cursor, std::string::npos);
    return {std::move(original), std::move(masked), std::move(spans)};
  }

  /// Already-masked text with no recoverable original (e.g. a user-supplied template).
  static MaskedSentence literal(std::string masked_text) {
    MaskedSentence m;
    m.original = masked_text;
    m.masked = std::move(masked_text);
    return m;
  }

  std::size_t slot_count() const noexcept { return mask_spans.size(); }

  std::string_view span_text(std::size_t i) const {
    const auto& [s, e] = mask_spans.at(i);
    return std::string_view(original).substr(s, e - s);
  }

  /// Re-inserts the original spans into the masked form.
  std::string unmask() const {
    std::string out;
    std::size_t pos = 0;
    std::size_t slot = 0;
    while (true) {
      auto hit = masked.find(kMaskToken, pos);
      if (hit == std::string::npos || slot == mask_spans.size()) break;
      out.append(masked, pos, hit - pos);
      out.append(span_text(slot++));
      pos = hit + kMaskToken.size();
    }
    out.append(masked, pos, std::string::npos);
    return out;
  }

  /// Replaces slot `i` with `text` and every other slot with its original span.
  std::string fill_slot(std::size_t i, std::string_view text) const {
    std::string out;
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < mask_spans.size(); ++k) {
      const auto& [s, e] = mask_spans[k];
      out.append(original, cursor, s - cursor);
      if (k == i) out.append(text);
      else out.append(original, s, e - s);
      cursor = e;
    }
    out.append(original, cursor, std::string::npos);
    return out;
  }

  friend bool operator==(const MaskedSentence&, const MaskedSentence&) = default;
};

struct SimilarityScore {
  double value = 1.0;
  std::size_t distance = 0;
  std::size_t max_len = 0;
};

/// Lowercases ASCII letters and collapses every run of whitespace to one space.
inline std::string normalize_for_distance(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      if (!in_space) out.push_back(' ');
      in_space = true;
      continue;
    }
    in_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

/// Unit-cost insert/delete/substitute distance, two-row dynamic program.
template <typename T>
std::size_t levenshtein_distance(std::span<const T> a, std::span<const T> b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Raw character-level distance; no normalization applied.
inline std::size_t levenshtein_distance(std::string_view a, std::string_view b) {
  return levenshtein_distance<char>(std::span<const char>(a.data(), a.size()),
                                    std::span<const char>(b.data(), b.size()));
}

/// 1 - dist / max_len over normalized text. Two empty strings score 1.
inline SimilarityScore levenshtein_similarity(std::string_view a, std::string_view b) {
  const std::string na = normalize_for_distance(a);
  const std::string nb = normalize_for_distance(b);
  SimilarityScore s;
  s.distance = levenshtein_distance(na, nb);
  s.max_len = std::max(na.size(), nb.size());
  s.value = s.max_len == 0 ? 1.0
                           : 1.0 - static_cast<double>(s.distance) / static_cast<double>(s.max_len);
  return s;
}

inline SimilarityScore levenshtein_similarity(const MaskedSentence& a, const MaskedSentence& b) {
  return levenshtein_similarity(a.masked, b.masked);
}

// ---------------------------------------------------------------------------
// Entity masking

/// Port: anything that can locate entity spans in a sentence.
class EntityMasker {
 public:
  virtual ~EntityMasker() = default;
  virtual MaskedSentence mask(std::string_view sentence) const = 0;
  /// False when the masker must be called from one thread at a time.
  virtual bool concurrent_safe() const { return true; }
};

namespace detail {

inline bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-' || c == '.' ||
         c == '&';
}

struct Word {
  std::size_t start;
  std::size_t end;  // core end: trailing punctuation and possessive stripped
};

inline std::vector<Word> split_words(std::string_view s) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size()) break;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    std::size_t start = i;
    std::size_t end = j;
    while (start < end && !std::isalnum(static_cast<unsigned char>(s[start]))) ++start;
    // Keep the period of a single-letter initial ("J.").
    while (end > start && !std::isalnum(static_cast<unsigned char>(s[end - 1]))) {
      if (s[end - 1] == '.' && end - start == 2 && std::isupper(static_cast<unsigned char>(s[start])))
        break;
      --end;
    }
    if (end - start > 2 && s.substr(end - 2, 2) == "'s") end -= 2;
    if (start < end) words.push_back({start, end});
    i = j;
  }
  return words;
}

inline bool word_boundary(std::string_view s, std::size_t start, std::size_t end) {
  const bool left = start == 0 || !std::isalnum(static_cast<unsigned char>(s[start - 1]));
  const bool right = end == s.size() || !std::isalnum(static_cast<unsigned char>(s[end]));
  return left && right;
}

/// Sorts and unions spans, treating touching spans as one.
inline std::vector<Span> merge_spans(std::vector<Span> spans) {
  std::sort(spans.begin(), spans.end());
  std::vector<Span> out;
  for (const auto& sp : spans) {
    if (!out.empty() && sp.first <= out.back().second) {
      out.back().second = std::max(out.back().second, sp.second);
    } else {
      out.push_back(sp);
    }
  }
  return out;
}

inline std::vector<Span> dictionary_spans(std::string_view s, std::span<const std::string> entities) {
  std::vector<Span> spans;
  for (const auto& ent : entities) {
    if (ent.empty()) continue;
    std::size_t pos = 0;
    while ((pos = s.find(ent, pos)) != std::string_view::npos) {
      if (word_boundary(s, pos, pos + ent.size())) spans.emplace_back(pos, pos + ent.size());
      pos += 1;
    }
  }
  return spans;
}

}  // namespace detail

/// Masks exactly the listed entity strings (longest match wins). Used as a
/// fixture masker and as the dictionary layer of RuleBasedMasker.
class DictionaryMasker final : public EntityMasker {
 public:
  explicit DictionaryMasker(std::vector<std::string> entities) : entities_(std::move(entities)) {}

  MaskedSentence mask(std::string_view sentence) const override {
    return MaskedSentence::from_spans(
        std::string(sentence),
        detail::merge_spans(detail::dictionary_spans(sentence, entities_)));
  }

 private:
  std::vector<std::string> entities_;
};

/// Deterministic offline masker: dictionary entries, runs of capitalized
/// words (a sentence-initial word only when it is not a common opener and the
/// next word is capitalized too), and digit runs. "July 18, 1918" collapses to
/// one span.
class RuleBasedMasker final : public EntityMasker {
 public:
  RuleBasedMasker() = default;
  explicit RuleBasedMasker(std::vector<std::string> entities) : entities_(std::move(entities)) {}

  MaskedSentence mask(std::string_view s) const override {
    std::vector<Span> spans = detail::dictionary_spans(s, entities_);
    const auto words = detail::split_words(s);

    auto capitalized = [&](const detail::Word& w) {
      const unsigned char c = static_cast<unsigned char>(s[w.start]);
      if (!std::isupper(c)) return false;
      return !(w.end - w.start == 1 && s[w.start] == 'I');
    };
    auto numeric = [&](const detail::Word& w) {
      for (std::size_t k = w.start; k < w.end; ++k) {
        const char c = s[k];
        if (!std::isdigit(static_cast<unsigned char>(c)) && c != ',' && c != '.') return false;
      }
      return std::isdigit(static_cast<unsigned char>(s[w.start])) != 0;
    };
    auto is_opener = [&](const detail::Word& w) {
      std::string lw;
      for (std::size_t k = w.start; k < w.end; ++k)
        lw.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[k]))));
      return openers().contains(lw);
    };

    std::vector<Span> runs;
    for (std::size_t i = 0; i < words.size(); ++i) {
      const auto& w = words[i];
      bool starts = false;
      if (numeric(w)) {
        starts = true;
      } else if (capitalized(w)) {
        if (i == 0) {
          starts = !is_opener(w) && i + 1 < words.size() && capitalized(words[i + 1]);
        } else {
          starts = true;
        }
      }
      if (!starts) continue;
      std::size_t j = i;
      // Extend over following capitalized or numeric words, but only when the
      // gap between them is plain whitespace or ", " before a number.
      while (j + 1 < words.size()) {
        const auto& next = words[j + 1];
        const auto gap = s.substr(words[j].end, next.start - words[j].end);
        const bool ws_gap = gap.find_first_not_of(" \t") == std::string_view::npos;
        const bool comma_gap = gap == ", " && numeric(next);
        if (!(ws_gap || comma_gap)) break;
        if (!(capitalized(next) || numeric(next))) break;
        ++j;
      }
      runs.emplace_back(w.start, words[j].end);
      i = j;
    }
    spans.insert(spans.end(), runs.begin(), runs.end());
    return MaskedSentence::from_spans(std::string(s), detail::merge_spans(std::move(spans)));
  }

 private:
  static const std::unordered_set<std::string>& openers() {
    static const std::unordered_set<std::string> words = {
        "what", "when", "where", "who", "whom", "whose", "which", "why", "how", "in",
        "on",   "at",   "for",   "from", "is",  "are",   "was",   "were", "did", "do",
        "does", "can",  "could", "would", "will", "has",  "have",  "had",  "name", "list",
        "give", "tell", "the",   "a",    "an",  "of",    "to",    "by",   "with", "according",
        "during", "after", "before", "since", "describe", "explain", "identify"};
    return words;
  }

  std::vector<std::string> entities_;
};

/// Masks with `masker`. Empty input passes through as empty.
inline MaskedSentence mask_entities(std::string_view s, const EntityMasker& masker) {
  if (s.empty()) return MaskedSentence{};
  return masker.mask(s);
}

/// Masks with `primary`; on MaskerUnavailable retries with `fallback`.
inline MaskedSentence mask_entities(std::string_view s, const EntityMasker& primary,
                                    const EntityMasker& fallback) {
  try {
    return mask_entities(s, primary);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::MaskerUnavailable) throw;
    return mask_entities(s, fallback);
  }
}

/// Recovers mask spans by aligning a masked string against its original.
/// Literal pieces between mask tokens must appear in order in `original`;
/// throws ProtocolError otherwise.
inline MaskedSentence align_masked(std::string original, std::string_view masked) {
  std::vector<std::string_view> pieces;
  std::size_t pos = 0;
  while (true) {
    const auto hit = masked.find(kMaskToken, pos);
    if (hit == std::string_view::npos) {
      pieces.push_back(masked.substr(pos));
      break;
    }
    pieces.push_back(masked.substr(pos, hit - pos));
    pos = hit + kMaskToken.size();
  }
  std::vector<Span> spans;
  require(original.compare(0, pieces.front().size(), pieces.front()) == 0, ErrorKind::ProtocolError,
          "masked prefix does not match original");
  std::size_t cursor = pieces.front().size();
  for (std::size_t k = 1; k < pieces.size(); ++k) {
    const auto piece = pieces[k];
    std::size_t found;
    if (k + 1 == pieces.size()) {
      // Last piece anchors to the end of the original.
      require(original.size() >= cursor + piece.size() &&
                  original.compare(original.size() - piece.size(), piece.size(), piece) == 0,
              ErrorKind::ProtocolError, "masked suffix does not match original");
      found = original.size() - piece.size();
    } else {
      found = piece.empty() ? cursor + 1 : original.find(piece, cursor + 1);
      require(found != std::string::npos, ErrorKind::ProtocolError,
              "masked text does not align with original");
    }
    require(found > cursor, ErrorKind::ProtocolError, "empty mask span");
    spans.emplace_back(cursor, found);
    cursor = found + piece.size();
  }
  return MaskedSentence::from_spans(std::move(original), std::move(spans));
}

}  // namespace unlearn::textsim
