// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-example evaluation metrics and the utility / forgetting aggregates.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unlearn/error.hpp"
#include "unlearn/neighborset.hpp"
#include "unlearn/ports.hpp"

namespace unlearn::metrics {

/// Lowercase, drop ASCII punctuation, split on whitespace.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else if (!std::ispunct(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

template <typename T>
std::size_t lcs_length(std::span<const T> a, std::span<const T> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// |LCS(generated, reference)| / |reference|.
inline double rouge_l_recall(std::span<const std::string> generated,
                             std::span<const std::string> reference) {
  require(!reference.empty(), ErrorKind::EmptyReference, "ROUGE-L reference has no tokens");
  return static_cast<double>(lcs_length(generated, reference)) /
         static_cast<double>(reference.size());
}

inline double rouge_l_recall(std::string_view generated, std::string_view reference) {
  const auto g = tokenize(generated);
  const auto r = tokenize(reference);
  return rouge_l_recall(std::span<const std::string>(g), std::span<const std::string>(r));
}

/// Sum of values, independent of their order: values are sorted first and
/// then added pairwise.
inline double order_free_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  while (v.size() > 1) {
    std::vector<double> next;
    next.reserve((v.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < v.size(); i += 2) next.push_back(v[i] + v[i + 1]);
    if (v.size() % 2) next.push_back(v.back());
    v = std::move(next);
  }
  return v.empty() ? 0.0 : v.front();
}

inline double order_free_mean(std::vector<double> v) {
  const double n = static_cast<double>(v.size());
  return order_free_sum(std::move(v)) / n;
}

enum class ProbabilityMode {
  arithmetic,  // (1/T) sum_t p_t
  geometric,   // exp((1/T) sum_t log p_t)
};

/// Normalized probability of a ground-truth answer from its per-token
/// conditional probabilities.
inline double answer_probability(std::span<const double> token_probs,
                                 ProbabilityMode mode = ProbabilityMode::arithmetic) {
  require(!token_probs.empty(), ErrorKind::EmptySequence, "no token probabilities");
  for (double p : token_probs)
    require(p >= 0.0 && p <= 1.0 && !std::isnan(p), ErrorKind::InvalidArgument,
            "token probability outside [0, 1]");
  std::vector<double> v(token_probs.begin(), token_probs.end());
  if (mode == ProbabilityMode::arithmetic) return order_free_mean(std::move(v));
  if (std::any_of(v.begin(), v.end(), [](double p) { return p == 0.0; })) return 0.0;
  for (auto& p : v) p = std::log(p);
  return std::exp(order_free_mean(std::move(v)));
}

/// max(cos(a, b), 0).
inline double cosine_floor(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::DimensionMismatch, "embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  require(na > 0.0 && nb > 0.0, ErrorKind::ZeroVector, "zero-norm embedding");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

/// 1 iff the judge says the reference entails the generation; neutral counts 0.
inline double entailment_score(std::string_view generation, std::string_view reference,
                               NliJudge& judge) {
  try {
    return judge.nli(reference, generation) == NliLabel::entailment ? 1.0 : 0.0;
  } catch (const Error& e) {
    fail(ErrorKind::PortUnavailable, e.what());
  }
}

struct MetricVector {
  double rouge_l_recall = 0.0;
  double probability = 0.0;
  double cosine_sim = 0.0;
  double entailment = 0.0;

  double mean() const { return (rouge_l_recall + probability + cosine_sim + entailment) / 4.0; }

  void validate() const {
    for (double x : {rouge_l_recall, probability, cosine_sim})
      require(x >= 0.0 && x <= 1.0, ErrorKind::InvalidArgument, "metric component outside [0, 1]");
    require(entailment == 0.0 || entailment == 1.0, ErrorKind::InvalidArgument,
            "entailment must be 0 or 1");
  }

  friend bool operator==(const MetricVector&, const MetricVector&) = default;
};

enum class Role { retain, forget };

/// Mean over examples of already-averaged per-example utilities; the forget
/// role reports the complement (forget efficacy).
inline double aggregate_utilities(std::span<const double> per_example, Role role) {
  require(!per_example.empty(), ErrorKind::EmptySet, "cannot aggregate an empty set");
  const double mu = order_free_mean(std::vector<double>(per_example.begin(), per_example.end()));
  return role == Role::retain ? mu : 1.0 - mu;
}

/// retain: MU = mean of per-example means. forget: FE = 1 - that mean.
inline double aggregate(std::span<const MetricVector> examples, Role role) {
  std::vector<double> means;
  means.reserve(examples.size());
  for (const auto& m : examples) means.push_back(m.mean());
  return aggregate_utilities(means, role);
}

/// Percent change of utility; negative means utility was lost.
inline double relative_utility_drop(double mu_before, double mu_after) {
  require(mu_before > 0.0, ErrorKind::ZeroBaseline, "baseline utility must be positive");
  return (mu_after - mu_before) / mu_before * 100.0;
}

/// One scored example with the metadata used for grouping.
struct ExampleScore {
  std::string id;
  SetKind set_kind = SetKind::forget;
  std::optional<Category> category;
  std::optional<std::string> paraphrase_of;
  double utility = 0.0;
};

enum class GroupKey { set_kind, category, paraphrase_group };

namespace detail {

/// group name -> (example id -> utility). Paraphrase records only enter the
/// paraphrase grouping; there each original question contributes the mean of
/// its paraphrases.
inline std::map<std::string, std::map<std::string, double>> group_utilities(
    std::span<const ExampleScore> xs, GroupKey key) {
  std::map<std::string, std::map<std::string, double>> groups;
  if (key == GroupKey::paraphrase_group) {
    std::map<std::string, std::map<std::string, std::vector<double>>> acc;
    for (const auto& x : xs)
      if (x.paraphrase_of) acc[std::string(to_string(x.set_kind))][*x.paraphrase_of].push_back(x.utility);
    for (auto& [g, items] : acc)
      for (auto& [orig, us] : items) groups[g][orig] = order_free_mean(std::move(us));
    return groups;
  }
  for (const auto& x : xs) {
    if (x.paraphrase_of) continue;
    if (key == GroupKey::set_kind) {
      groups[std::string(to_string(x.set_kind))][x.id] = x.utility;
    } else if (x.category) {
      groups[std::string(to_string(*x.category))][x.id] = x.utility;
    }
  }
  return groups;
}

}  // namespace detail

/// Group-wise relative utility drop between two evaluations of the same
/// examples.
inline std::map<std::string, double> rud_by_group(std::span<const ExampleScore> before,
                                                  std::span<const ExampleScore> after,
                                                  GroupKey key) {
  const auto gb = detail::group_utilities(before, key);
  const auto ga = detail::group_utilities(after, key);
  require(gb.size() == ga.size(), ErrorKind::GroupMismatch, "before/after cover different groups");
  std::map<std::string, double> out;
  for (const auto& [g, items_b] : gb) {
    const auto it = ga.find(g);
    require(it != ga.end(), ErrorKind::GroupMismatch, "group '" + g + "' missing after unlearning");
    const auto& items_a = it->second;
    require(items_a.size() == items_b.size(), ErrorKind::GroupMismatch,
            "group '" + g + "' has different examples before and after");
    std::vector<double> ub, ua;
    for (const auto& [id, u] : items_b) {
      const auto jt = items_a.find(id);
      require(jt != items_a.end(), ErrorKind::GroupMismatch,
              "example '" + id + "' missing after unlearning");
      ub.push_back(u);
      ua.push_back(jt->second);
    }
    out[g] = relative_utility_drop(order_free_mean(std::move(ub)), order_free_mean(std::move(ua)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation over logged generations

/// One logged model output for a dataset example.
struct EvalRecord {
  std::string id;
  std::string model_tag;
  std::string generation;
  std::vector<double> token_probs;
  std::optional<std::vector<double>> embedding;
  std::optional<NliLabel> nli_label;

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct EvalPorts {
  Embedder* embedder = nullptr;
  NliJudge* judge = nullptr;
  ProbabilityMode probability_mode = ProbabilityMode::arithmetic;
};

struct ScoredExample {
  QAPair pair;
  MetricVector metrics;
};

/// Scores `evaluated` outputs against the dataset answers; cosine similarity
/// compares each output with the `reference` model's output for the same id
/// (typically the model before unlearning).
inline std::vector<ScoredExample> score_examples(std::span<const QAPair> dataset,
                                                 std::span<const EvalRecord> evaluated,
                                                 std::span<const EvalRecord> reference,
                                                 const EvalPorts& ports) {
  std::map<std::string_view, const EvalRecord*> ev, ref;
  for (const auto& r : evaluated) ev[r.id] = &r;
  for (const auto& r : reference) ref[r.id] = &r;

  auto embedding_of = [&](const EvalRecord& r) {
    if (r.embedding) return *r.embedding;
    require(ports.embedder != nullptr, ErrorKind::PortUnavailable,
            "no embedding logged for '" + r.id + "' and no embedder configured");
    try {
      return ports.embedder->embed(r.generation);
    } catch (const Error& e) {
      fail(ErrorKind::PortUnavailable, e.what());
    }
  };

  std::vector<ScoredExample> out;
  for (const auto& q : dataset) {
    const auto e = ev.find(q.id);
    require(e != ev.end(), ErrorKind::InvalidArgument, "no evaluation record for '" + q.id + "'");
    const auto r = ref.find(q.id);
    require(r != ref.end(), ErrorKind::InvalidArgument, "no reference record for '" + q.id + "'");
    const EvalRecord& rec = *e->second;

    MetricVector m;
    m.rouge_l_recall = rouge_l_recall(rec.generation, q.answer);
    m.probability = answer_probability(rec.token_probs, ports.probability_mode);
    m.cosine_sim = cosine_floor(embedding_of(rec), embedding_of(*r->second));
    if (rec.nli_label) {
      m.entailment = *rec.nli_label == NliLabel::entailment ? 1.0 : 0.0;
    } else {
      require(ports.judge != nullptr, ErrorKind::PortUnavailable,
              "no NLI label logged for '" + q.id + "' and no judge configured");
      m.entailment = entailment_score(rec.generation, q.answer, *ports.judge);
    }
    out.push_back({q, m});
  }
  return out;
}

inline std::vector<ExampleScore> to_example_scores(std::span<const ScoredExample> xs) {
  std::vector<ExampleScore> out;
  out.reserve(xs.size());
  for (const auto& x : xs)
    out.push_back({x.pair.id, x.pair.set_kind, x.pair.category, x.pair.paraphrase_of, x.metrics.mean()});
  return out;
}

struct SetSummary {
  MetricVector mean;
  double utility = 0.0;
  std::size_t count = 0;
};

struct UtilityReport {
  std::string model_tag;
  /// MU over every non-forget, non-paraphrase example.
  std::optional<double> model_utility;
  std::optional<double> forget_efficacy;
  std::map<SetKind, SetSummary> per_set;
  std::map<Category, double> per_category;
  /// Filled by attach_rud against a baseline report.
  std::map<SetKind, double> rud;
};

inline UtilityReport build_report(std::span<const ScoredExample> xs, std::string model_tag = {}) {
  UtilityReport rep;
  rep.model_tag = std::move(model_tag);
  std::map<SetKind, std::vector<MetricVector>> by_set;
  std::map<Category, std::vector<double>> by_cat;
  std::vector<double> retain;
  for (const auto& x : xs) {
    if (x.pair.paraphrase_of) continue;
    by_set[x.pair.set_kind].push_back(x.metrics);
    if (x.pair.set_kind != SetKind::forget) {
      retain.push_back(x.metrics.mean());
      if (x.pair.category) by_cat[*x.pair.category].push_back(x.metrics.mean());
    }
  }
  for (const auto& [k, ms] : by_set) {
    SetSummary s;
    s.count = ms.size();
    std::vector<double> r, p, c, e;
    for (const auto& m : ms) {
      r.push_back(m.rouge_l_recall);
      p.push_back(m.probability);
      c.push_back(m.cosine_sim);
      e.push_back(m.entailment);
    }
    s.mean = {order_free_mean(r), order_free_mean(p), order_free_mean(c), order_free_mean(e)};
    s.utility = aggregate(ms, Role::retain);
    rep.per_set[k] = s;
    if (k == SetKind::forget) rep.forget_efficacy = aggregate(ms, Role::forget);
  }
  if (!retain.empty()) rep.model_utility = aggregate_utilities(retain, Role::retain);
  for (auto& [c, us] : by_cat) rep.per_category[c] = aggregate_utilities(us, Role::retain);
  return rep;
}

/// RUD of every retain set present in both reports.
inline void attach_rud(UtilityReport& after, const UtilityReport& before) {
  after.rud.clear();
  for (const auto& [k, s] : after.per_set) {
    if (k == SetKind::forget) continue;
    const auto it = before.per_set.find(k);
    if (it == before.per_set.end()) continue;
    after.rud[k] = relative_utility_drop(it->second.utility, s.utility);
  }
}

}  // namespace unlearn::metrics
