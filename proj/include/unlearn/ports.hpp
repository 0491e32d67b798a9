// SPDX-License-Identifier: Apache-2.0
#pragma once

// Abstract capabilities the pipeline obtains from outside models. Adapters
// (fixture replay, HTTP) live in clients.hpp and http_transport.hpp.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "unlearn/error.hpp"
#include "unlearn/textsim.hpp"

namespace unlearn {

enum class NliLabel { entailment, neutral, contradiction };

inline std::string_view to_string(NliLabel l) {
  switch (l) {
    case NliLabel::entailment: return "entailment";
    case NliLabel::neutral: return "neutral";
    case NliLabel::contradiction: return "contradiction";
  }
  return "neutral";
}

inline NliLabel parse_nli_label(std::string_view s) {
  if (s == "entailment") return NliLabel::entailment;
  if (s == "neutral") return NliLabel::neutral;
  if (s == "contradiction") return NliLabel::contradiction;
  fail(ErrorKind::ProtocolError, "unknown NLI label '" + std::string(s) + "'");
}

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string generate(std::string_view prompt, int max_tokens) = 0;
};

class TokenScorer {
 public:
  virtual ~TokenScorer() = default;
  /// One probability in (0, 1] per target token.
  virtual std::vector<double> score(std::string_view prompt, std::string_view target) = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(std::string_view text) = 0;
};

class NliJudge {
 public:
  virtual ~NliJudge() = default;
  virtual NliLabel nli(std::string_view premise, std::string_view hypothesis) = 0;
};

struct GeneratedQa {
  std::string question;
  std::string answer;
  std::vector<std::string> aliases;
};

/// Fills a masked question template with an entity. Returns nullopt when it
/// has nothing to say about that entity.
class QaGenerator {
 public:
  virtual ~QaGenerator() = default;
  virtual std::optional<GeneratedQa> generate(const textsim::MaskedSentence& templ,
                                              std::size_t entity_slot,
                                              std::string_view entity) = 0;
};

}  // namespace unlearn
