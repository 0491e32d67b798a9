// SPDX-License-Identifier: Apache-2.0
#pragma once

// Construction and validation of neighbor sets: clustering of forget-set
// questions by masked syntactic similarity, synthesis of syntactically matched
// QA pairs for unrelated retain entities, probe filtering, and distinctness
// checks for the domain and entity neighbor sets.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "unlearn/error.hpp"
#include "unlearn/ports.hpp"
#include "unlearn/textsim.hpp"

namespace unlearn {

enum class SetKind {
  forget,
  domain_neighbor,
  entity_neighbor,
  syn_similar_neighbor,
  syn_different_neighbor,
};

inline constexpr SetKind kAllSetKinds[] = {SetKind::forget, SetKind::domain_neighbor,
                                           SetKind::entity_neighbor,
                                           SetKind::syn_similar_neighbor,
                                           SetKind::syn_different_neighbor};

inline std::string_view to_string(SetKind k) {
  switch (k) {
    case SetKind::forget: return "forget";
    case SetKind::domain_neighbor: return "domain_neighbor";
    case SetKind::entity_neighbor: return "entity_neighbor";
    case SetKind::syn_similar_neighbor: return "syn_similar_neighbor";
    case SetKind::syn_different_neighbor: return "syn_different_neighbor";
  }
  return "forget";
}

inline SetKind parse_set_kind(std::string_view s) {
  for (auto k : kAllSetKinds)
    if (to_string(k) == s) return k;
  fail(ErrorKind::InvalidArgument, "unknown set_kind '" + std::string(s) + "'");
}

enum class Category { human, company, creative_works, fictional_character, product };

inline constexpr Category kAllCategories[] = {Category::human, Category::company,
                                              Category::creative_works,
                                              Category::fictional_character, Category::product};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::human: return "human";
    case Category::company: return "company";
    case Category::creative_works: return "creative_works";
    case Category::fictional_character: return "fictional_character";
    case Category::product: return "product";
  }
  return "human";
}

inline Category parse_category(std::string_view s) {
  for (auto c : kAllCategories)
    if (to_string(c) == s) return c;
  fail(ErrorKind::InvalidArgument, "unknown category '" + std::string(s) + "'");
}

struct QAPair {
  std::string id;
  std::string entity;
  std::string question;
  std::string answer;
  std::vector<std::string> aliases;
  SetKind set_kind = SetKind::forget;
  std::optional<int> cluster_id;
  std::optional<Category> category;
  std::optional<std::string> paraphrase_of;

  friend bool operator==(const QAPair&, const QAPair&) = default;
};

/// Checks record-level and dataset-level invariants (unique ids, non-empty
/// questions, cluster ids on syn-similar records).
inline void validate_dataset(std::span<const QAPair> records) {
  std::set<std::string_view> ids;
  for (const auto& r : records) {
    require(!r.id.empty(), ErrorKind::InvalidArgument, "record with empty id");
    require(ids.insert(r.id).second, ErrorKind::InvalidArgument, "duplicate id '" + r.id + "'");
    require(!r.question.empty(), ErrorKind::InvalidArgument, "record '" + r.id + "' has empty question");
    require(r.set_kind != SetKind::syn_similar_neighbor || r.cluster_id.has_value(),
            ErrorKind::InvalidArgument, "syn-similar record '" + r.id + "' lacks cluster_id");
  }
}

inline std::vector<QAPair> filter_by_kind(std::span<const QAPair> records, SetKind kind) {
  std::vector<QAPair> out;
  for (const auto& r : records)
    if (r.set_kind == kind) out.push_back(r);
  return out;
}

struct Thresholds {
  double theta_high = 0.75;
  double theta_low = 0.4;
  int min_cluster_size = 3;

  void validate() const {
    require(0.0 <= theta_low && theta_low < theta_high && theta_high <= 1.0,
            ErrorKind::InvalidArgument, "thresholds must satisfy 0 <= theta_low < theta_high <= 1");
    require(min_cluster_size >= 2, ErrorKind::InvalidArgument, "min_cluster_size must be >= 2");
  }
};

struct SyntacticCluster {
  int cluster_id = 0;
  std::vector<std::string> member_ids;
  textsim::MaskedSentence templ;
  std::size_t entity_slot = 0;  // which mask slot of `templ` holds the entity
  double min_intra_similarity = 1.0;
};

using SimilarityMatrix = std::vector<std::vector<double>>;

/// Symmetric all-pairs similarity. Rows are split across `workers` threads;
/// every cell is computed independently so the result does not depend on the
/// worker count.
inline SimilarityMatrix pairwise_similarity(std::span<const textsim::MaskedSentence> masked,
                                            unsigned workers = 1) {
  const std::size_t n = masked.size();
  SimilarityMatrix sim(n, std::vector<double>(n, 1.0));
  auto fill_rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) sim[i][j] = textsim::levenshtein_similarity(masked[i], masked[j]).value;
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    fill_rows(0, n);
    return sim;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back(fill_rows, b, e);
  }
  return sim;
}

namespace detail {

inline std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

inline double mean_to_others(const SimilarityMatrix& sim, std::size_t i,
                             const std::vector<std::size_t>& members) {
  if (members.size() < 2) return 1.0;
  double total = 0.0;
  for (auto j : members)
    if (j != i) total += sim[i][j];
  return total / static_cast<double>(members.size() - 1);
}

inline std::size_t entity_slot_of(const textsim::MaskedSentence& m, std::string_view entity) {
  for (std::size_t k = 0; k < m.slot_count(); ++k)
    if (m.span_text(k) == entity) return k;
  for (std::size_t k = 0; k < m.slot_count(); ++k)
    if (m.span_text(k).find(entity) != std::string_view::npos ||
        (!m.span_text(k).empty() && entity.find(m.span_text(k)) != std::string_view::npos))
      return k;
  return 0;
}

}  // namespace detail

/// Groups forget questions whose masked forms are at least theta_high similar.
///
/// Connected components of the theta_high graph are pruned greedily (drop the
/// member with the lowest mean similarity to the rest, ties to the smallest
/// id) until every remaining pair clears theta_high; components left with
/// fewer than min_cluster_size members are discarded. The cluster template is
/// the member with the highest mean similarity (ties to the smallest id).
inline std::vector<SyntacticCluster> cluster_forget_questions(std::span<const QAPair> forget,
                                                              const Thresholds& th,
                                                              const textsim::EntityMasker& masker,
                                                              unsigned workers = 1) {
  th.validate();
  require(!forget.empty(), ErrorKind::EmptyForgetSet, "forget set is empty");

  const std::size_t n = forget.size();
  std::vector<textsim::MaskedSentence> masked;
  masked.reserve(n);
  for (const auto& q : forget) masked.push_back(textsim::mask_entities(q.question, masker));
  const SimilarityMatrix sim = pairwise_similarity(masked, workers);

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (sim[i][j] >= th.theta_high) {
        const auto a = detail::find_root(parent, i);
        const auto b = detail::find_root(parent, j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }

  // Components in order of their first member.
  std::map<std::size_t, std::vector<std::size_t>> components;
  for (std::size_t i = 0; i < n; ++i) components[detail::find_root(parent, i)].push_back(i);

  std::vector<SyntacticCluster> clusters;
  for (auto& [root, members] : components) {
    auto is_clique = [&] {
      for (std::size_t a = 0; a < members.size(); ++a)
        for (std::size_t b = a + 1; b < members.size(); ++b)
          if (sim[members[a]][members[b]] < th.theta_high) return false;
      return true;
    };
    while (members.size() >= static_cast<std::size_t>(th.min_cluster_size) && !is_clique()) {
      auto worst = members.begin();
      double worst_mean = detail::mean_to_others(sim, *worst, members);
      for (auto it = std::next(members.begin()); it != members.end(); ++it) {
        const double m = detail::mean_to_others(sim, *it, members);
        if (m < worst_mean || (m == worst_mean && forget[*it].id < forget[*worst].id)) {
          worst = it;
          worst_mean = m;
        }
      }
      members.erase(worst);
    }
    if (members.size() < static_cast<std::size_t>(th.min_cluster_size)) continue;

    SyntacticCluster c;
    c.cluster_id = static_cast<int>(clusters.size());
    std::size_t rep = members.front();
    double rep_mean = detail::mean_to_others(sim, rep, members);
    double min_sim = 1.0;
    for (std::size_t a = 0; a < members.size(); ++a) {
      const auto i = members[a];
      c.member_ids.push_back(forget[i].id);
      const double m = detail::mean_to_others(sim, i, members);
      if (m > rep_mean || (m == rep_mean && forget[i].id < forget[rep].id)) {
        rep = i;
        rep_mean = m;
      }
      for (std::size_t b = a + 1; b < members.size(); ++b)
        min_sim = std::min(min_sim, sim[i][members[b]]);
    }
    c.templ = masked[rep];
    c.entity_slot = detail::entity_slot_of(c.templ, forget[rep].entity);
    c.min_intra_similarity = min_sim;
    clusters.push_back(std::move(c));
  }
  return clusters;
}

/// Retain entities not in `excluded`, first-occurrence order, duplicates dropped.
inline std::vector<std::string> select_candidate_entities(std::span<const std::string> retain_entities,
                                                          std::span<const std::string> excluded) {
  const std::set<std::string_view> banned(excluded.begin(), excluded.end());
  std::set<std::string_view> seen;
  std::vector<std::string> out;
  for (const auto& e : retain_entities)
    if (!banned.contains(e) && seen.insert(e).second) out.push_back(e);
  return out;
}

/// Offline QA generator: substitutes the entity into the template's entity
/// slot and looks the answer up in a (template, entity) table.
class TemplateSubstitutionGenerator final : public QaGenerator {
 public:
  struct Answer {
    std::string answer;
    std::vector<std::string> aliases;
  };

  /// Keyed by (masked template text, entity).
  void add(std::string masked_template, std::string entity, Answer a) {
    table_[{std::move(masked_template), std::move(entity)}] = std::move(a);
  }

  std::optional<GeneratedQa> generate(const textsim::MaskedSentence& templ, std::size_t entity_slot,
                                      std::string_view entity) override {
    const auto it = table_.find({templ.masked, std::string(entity)});
    if (it == table_.end()) return std::nullopt;
    std::string question = templ.slot_count() == 0
                               ? templ.masked
                               : templ.fill_slot(std::min(entity_slot, templ.slot_count() - 1), entity);
    return GeneratedQa{std::move(question), it->second.answer, it->second.aliases};
  }

 private:
  std::map<std::pair<std::string, std::string>, Answer> table_;
};

struct SynGenOptions {
  Thresholds thresholds;
  /// Pairs requested per cluster; nullopt means the cluster's size.
  std::optional<std::size_t> per_cluster;
  /// Questions of the other neighbor sets (domain, entity); generated
  /// questions must score <= theta_low against all of them.
  std::vector<std::string> other_set_questions;
};

/// Fills each cluster template with candidate entities, keeping only
/// questions that stay within theta_high of the template and at most
/// theta_low from every question of the other neighbor sets.
inline std::vector<QAPair> generate_syn_similar_pairs(
    std::span<const SyntacticCluster> clusters, std::span<const std::string> candidates,
    QaGenerator& generator, const textsim::EntityMasker& masker, const SynGenOptions& opts,
    const std::function<std::optional<Category>(std::string_view)>& category_of = {}) {
  opts.thresholds.validate();
  require(!candidates.empty(), ErrorKind::NoValidFill, "no candidate entities");

  std::vector<textsim::MaskedSentence> others;
  others.reserve(opts.other_set_questions.size());
  for (const auto& q : opts.other_set_questions) others.push_back(textsim::mask_entities(q, masker));

  std::vector<QAPair> out;
  for (const auto& c : clusters) {
    const std::size_t want = opts.per_cluster.value_or(c.member_ids.size());
    std::size_t made = 0;
    for (const auto& ent : candidates) {
      if (made >= want) break;
      std::optional<GeneratedQa> qa;
      try {
        qa = generator.generate(c.templ, c.entity_slot, ent);
      } catch (const Error& e) {
        fail(ErrorKind::GenerationFailed, e.what());
      }
      if (!qa || qa->question.empty()) continue;
      const auto m = textsim::mask_entities(qa->question, masker);
      if (textsim::levenshtein_similarity(m, c.templ).value < opts.thresholds.theta_high) continue;
      const bool distinct = std::all_of(others.begin(), others.end(), [&](const auto& o) {
        return textsim::levenshtein_similarity(m, o).value <= opts.thresholds.theta_low;
      });
      if (!distinct) continue;

      QAPair p;
      p.id = "syn-c" + std::to_string(c.cluster_id) + "-" + std::to_string(made);
      p.entity = ent;
      p.question = std::move(qa->question);
      p.answer = std::move(qa->answer);
      p.aliases = std::move(qa->aliases);
      p.set_kind = SetKind::syn_similar_neighbor;
      p.cluster_id = c.cluster_id;
      if (category_of) p.category = category_of(ent);
      out.push_back(std::move(p));
      ++made;
    }
    require(made > 0, ErrorKind::NoValidFill,
            "cluster " + std::to_string(c.cluster_id) + " produced no conforming question");
  }
  return out;
}

/// Default probe matcher: case-insensitive containment of the answer or any alias.
inline bool answer_or_alias_match(std::string_view generation, const QAPair& pair) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
  };
  const std::string gen = lower(generation);
  auto hit = [&](std::string_view needle) {
    return !needle.empty() && gen.find(lower(needle)) != std::string::npos;
  };
  if (hit(pair.answer)) return true;
  return std::any_of(pair.aliases.begin(), pair.aliases.end(), [&](const auto& a) { return hit(a); });
}

using ProbeMatcher = std::function<bool(std::string_view generation, const QAPair&)>;

struct ProbeResult {
  std::vector<QAPair> kept;
  std::vector<QAPair> dropped;
};

/// Keeps the pairs the probed model answers correctly. kept and dropped
/// partition the input and preserve its order.
inline ProbeResult probe_filter(std::span<const QAPair> pairs, TextGenerator& model,
                                const ProbeMatcher& matcher = answer_or_alias_match,
                                int max_tokens = 32) {
  ProbeResult r;
  for (const auto& p : pairs) {
    std::string gen;
    try {
      gen = model.generate(p.question, max_tokens);
    } catch (const Error& e) {
      fail(ErrorKind::PortUnavailable, e.what());
    }
    (matcher(gen, p) ? r.kept : r.dropped).push_back(p);
  }
  return r;
}

struct DistinctnessViolation {
  std::string neighbor_id;
  std::string forget_id;
  double similarity = 0.0;
};

struct DistinctnessReport {
  std::vector<DistinctnessViolation> violations;
  /// Syn-similar records whose entity also appears in the forget, domain or
  /// entity sets.
  std::vector<std::string> entity_overlaps;
  std::size_t checked_pairs = 0;

  bool ok() const { return violations.empty() && entity_overlaps.empty(); }
};

/// Every domain/entity-neighbor question must be at most theta_low similar to
/// every forget question; syn-similar entities must not overlap the others.
inline DistinctnessReport validate_distinctness(std::span<const QAPair> neighbor_sets,
                                                std::span<const QAPair> forget,
                                                const Thresholds& th,
                                                const textsim::EntityMasker& masker) {
  th.validate();
  DistinctnessReport rep;
  std::vector<textsim::MaskedSentence> fm;
  fm.reserve(forget.size());
  for (const auto& f : forget) fm.push_back(textsim::mask_entities(f.question, masker));

  std::set<std::string_view> taken;
  for (const auto& f : forget) taken.insert(f.entity);
  for (const auto& n : neighbor_sets) {
    if (n.set_kind != SetKind::domain_neighbor && n.set_kind != SetKind::entity_neighbor) continue;
    taken.insert(n.entity);
    const auto m = textsim::mask_entities(n.question, masker);
    for (std::size_t i = 0; i < forget.size(); ++i) {
      ++rep.checked_pairs;
      const double s = textsim::levenshtein_similarity(m, fm[i]).value;
      if (s > th.theta_low) rep.violations.push_back({n.id, forget[i].id, s});
    }
  }
  for (const auto& n : neighbor_sets)
    if (n.set_kind == SetKind::syn_similar_neighbor && taken.contains(n.entity))
      rep.entity_overlaps.push_back(n.id);
  return rep;
}

}  // namespace unlearn
