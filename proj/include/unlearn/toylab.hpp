// SPDX-License-Identifier: Apache-2.0
#pragma once

// A desk-scale unlearning laboratory.
//
// The model predicts a single answer token for a (template, entity) question
// with logits u[template] + v[entity] + b. Every question rendered from the
// same template shares the template row, which is the modeling hypothesis that
// couples syntactically similar facts. Gradients are derived by hand.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "unlearn/error.hpp"
#include "unlearn/losses.hpp"
#include "unlearn/metrics.hpp"
#include "unlearn/neighborset.hpp"
#include "unlearn/textsim.hpp"

namespace unlearn::toylab {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// All trainable tensors; the same shape carries gradients.
struct Params {
  Matrix u;               // templates x vocab
  Matrix v;               // entities x vocab
  std::vector<double> b;  // vocab

  static Params zeros(std::size_t templates, std::size_t entities, std::size_t vocab) {
    return {Matrix(templates, vocab), Matrix(entities, vocab), std::vector<double>(vocab, 0.0)};
  }

  std::size_t size() const { return u.data.size() + v.data.size() + b.size(); }

  /// Flat view for finite-difference checks: u, then v, then b.
  double& at(std::size_t k) {
    if (k < u.data.size()) return u.data[k];
    k -= u.data.size();
    if (k < v.data.size()) return v.data[k];
    return b.at(k - v.data.size());
  }
  double at(std::size_t k) const { return const_cast<Params*>(this)->at(k); }

  void axpy(double alpha, const Params& g) {
    for (std::size_t i = 0; i < u.data.size(); ++i) u.data[i] += alpha * g.u.data[i];
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] += alpha * g.v.data[i];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += alpha * g.b[i];
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double x : u.data) s += x * x;
    for (double x : v.data) s += x * x;
    for (double x : b) s += x * x;
    return std::sqrt(s);
  }

  friend bool operator==(const Params&, const Params&) = default;
};

class ToyModel {
 public:
  ToyModel() = default;
  ToyModel(std::size_t templates, std::size_t entities, std::size_t vocab, std::size_t idk_token)
      : theta(Params::zeros(templates, entities, vocab)), idk_token(idk_token) {
    require(idk_token < vocab, ErrorKind::InvalidArgument, "IDK token outside vocabulary");
  }

  Params theta;
  std::size_t idk_token = 0;

  std::size_t templates() const { return theta.u.rows; }
  std::size_t entities() const { return theta.v.rows; }
  std::size_t vocab() const { return theta.b.size(); }

  std::vector<double> logits(std::size_t t, std::size_t e) const {
    const auto ut = theta.u.row(t);
    const auto ve = theta.v.row(e);
    std::vector<double> z(vocab());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = ut[j] + ve[j] + theta.b[j];
    return z;
  }

  std::vector<double> probs(std::size_t t, std::size_t e) const {
    auto z = logits(t, e);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (auto& x : z) s += (x = std::exp(x - m));
    for (auto& x : z) x /= s;
    return z;
  }

  double log_prob(std::size_t t, std::size_t e, std::size_t token) const {
    const auto z = logits(t, e);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double x : z) s += std::exp(x - m);
    return z[token] - m - std::log(s);
  }

  std::size_t argmax(std::size_t t, std::size_t e) const {
    const auto z = logits(t, e);
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  }

  /// Adds a logit-space gradient for question (t, e) into every parameter block.
  static void accumulate(Params& g, std::size_t t, std::size_t e, std::span<const double> dz) {
    auto ut = g.u.row(t);
    auto ve = g.v.row(e);
    for (std::size_t j = 0; j < dz.size(); ++j) {
      ut[j] += dz[j];
      ve[j] += dz[j];
      g.b[j] += dz[j];
    }
  }
};

struct ToyFact {
  std::string id;
  std::size_t template_id = 0;
  std::size_t entity_id = 0;
  std::size_t answer_token = 0;
  std::string rendered_question;
  SetKind set_kind = SetKind::forget;
  std::optional<Category> category;
  std::optional<std::string> paraphrase_of;
};

// ---------------------------------------------------------------------------
// Deterministic randomness (mt19937_64 is fully specified; distributions are not)

inline std::size_t draw_below(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n));
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw_below(rng, i)]);
}

// ---------------------------------------------------------------------------
// Corpus

struct TemplateText {
  std::string canonical;
  std::vector<std::string> variants;
  std::vector<std::string> answers;
};

inline const std::vector<TemplateText>& template_catalog() {
  static const std::vector<TemplateText> catalog = {
      {"When was {X} born?",
       {"In what year was {X} born?", "What is the birth year of {X}?", "{X} was born in which year?"},
       {"1921", "1934", "1948", "1956", "1963"}},
      {"Which city is the hometown of {X}?",
       {"What is {X}'s hometown?", "Where does {X} come from?", "Name the hometown of {X}."},
       {"Lisbon", "Oslo", "Quito", "Dakar", "Hanoi"}},
      {"What company does {X} currently work for?",
       {"Who is {X}'s current employer?", "Which firm employs {X} now?", "{X} works for which company?"},
       {"Acme", "Globex", "Initech", "Hooli", "Vandelay"}},
      {"Which musical instrument has {X} mastered?",
       {"What instrument does {X} play best?", "{X} is a master of which instrument?",
        "Name the instrument {X} has mastered."},
       {"piano", "violin", "cello", "flute", "harp"}},
      {"Name the sport that {X} played professionally.",
       {"Which sport did {X} play as a professional?", "{X} was a professional in which sport?",
        "What sport did {X} compete in professionally?"},
       {"tennis", "rugby", "cricket", "hockey", "rowing"}},
      {"Who is married to {X}?",
       {"Who is {X}'s spouse?", "{X} is married to whom?", "Name the spouse of {X}."},
       {"Mira Sol", "Ivo Lind", "Tess Roe", "Abel Quist", "Nora Vale"}},
      {"What language did {X} speak at home with family?",
       {"Which language is spoken in {X}'s home?", "{X} grew up speaking which language?",
        "What was the home language of {X}?"},
       {"Basque", "Welsh", "Tamil", "Yoruba", "Czech"}},
      {"How many children does {X} have?",
       {"What is the number of children {X} has?", "{X} has how many kids?", "Count the children of {X}."},
       {"none", "one", "two", "three", "four"}},
  };
  return catalog;
}

inline constexpr std::string_view kIdkAnswer = "I don't know";

struct CorpusSizes {
  std::size_t templates = 8;
  std::size_t entities = 60;
  std::size_t answer_vocab = 40;  // excluding the IDK token
  std::size_t forget_templates = 2;
  std::size_t forget_entities = 5;
  std::size_t domain_entities = 10;
  std::size_t entity_neighbor_entities = 10;
  std::size_t syn_similar_entities = 10;
  std::size_t syn_different_entities = 5;  // two facts each
};

struct ToyCorpus {
  std::vector<std::string> templates;                // canonical masked surface forms
  std::vector<std::vector<std::string>> variants;    // paraphrase surface forms per template
  std::vector<std::string> entity_names;
  std::vector<Category> entity_category;
  std::vector<std::string> vocab;                    // answer tokens, IDK last
  std::size_t idk_token = 0;
  std::vector<std::vector<std::size_t>> knowledge;   // entity x template -> answer token

  std::vector<ToyFact> training;  // everything the initial model is fitted on
  std::vector<ToyFact> forget;
  std::vector<ToyFact> domain_train, domain_test;
  std::vector<ToyFact> entity_train, entity_test;
  std::vector<ToyFact> syn_train, syn_test;
  std::vector<ToyFact> syn_different;
  std::vector<ToyFact> paraphrases;  // variants of syn_test and syn_different questions

  std::vector<QAPair> dataset;  // forget + neighbor sets as QA records
  std::vector<SyntacticCluster> clusters;
  DistinctnessReport distinctness;

  std::vector<ToyFact> domain() const { return concat(domain_train, domain_test); }
  std::vector<ToyFact> entity() const { return concat(entity_train, entity_test); }
  std::vector<ToyFact> syn_similar() const { return concat(syn_train, syn_test); }

  std::size_t template_size() const { return templates.size(); }

  ToyModel blank_model() const {
    return ToyModel(templates.size(), entity_names.size(), vocab.size(), idk_token);
  }

 private:
  static std::vector<ToyFact> concat(const std::vector<ToyFact>& a, const std::vector<ToyFact>& b) {
    std::vector<ToyFact> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
  }
};

namespace detail {

inline std::string render(std::string_view templ, std::string_view entity) {
  std::string out(templ);
  const auto pos = out.find(textsim::kMaskToken);
  if (pos != std::string::npos) out.replace(pos, textsim::kMaskToken.size(), entity);
  return out;
}

inline std::vector<std::string> entity_names(std::size_t count, std::mt19937_64& rng) {
  static const char* first[] = {"Alder", "Brina", "Cosmo", "Delia", "Emrys", "Fenna", "Gideon",
                                "Halle", "Ilsa",  "Jasper", "Kaia", "Lorcan", "Mabel", "Nico"};
  static const char* last[] = {"Voss",   "Harrow", "Quill",  "Marsh", "Thorne", "Keel",  "Brandt",
                               "Oakes",  "Pryce",  "Rigby", "Stroud", "Tallis", "Umber", "Wendt"};
  std::vector<std::string> names;
  for (const char* f : first)
    for (const char* l : last) names.push_back(std::string(f) + " " + l);
  require(count <= names.size(), ErrorKind::InfeasibleSizes, "not enough entity names");
  shuffle_in_place(names, rng);
  names.resize(count);
  return names;
}

/// Answers the ground truth of the toy world for any rendered question.
class WorldKnowledge final : public TextGenerator {
 public:
  explicit WorldKnowledge(std::map<std::string, std::string> answers) : answers_(std::move(answers)) {}
  std::string generate(std::string_view prompt, int) override {
    const auto it = answers_.find(std::string(prompt));
    return it == answers_.end() ? std::string(kIdkAnswer) : it->second;
  }

 private:
  std::map<std::string, std::string> answers_;
};

}  // namespace detail

/// Builds a deterministic toy world and its forget / neighbor sets.
///
/// Forget facts are the first forget_templates templates for forget_entities
/// entities. Domain neighbors share the forget entities' category on the first
/// half of the remaining templates, entity neighbors use the second half. The
/// syn-similar set comes from running the clustering and template-filling
/// pipeline on the rendered forget questions with the unused entities as
/// candidates. Within every block of `pool` consecutive entities each template's
/// answers form a permutation of that template's answer pool.
inline ToyCorpus build_toy_corpus(std::uint64_t seed, const CorpusSizes& sz = {}) {
  const auto& catalog = template_catalog();
  require(sz.templates >= sz.forget_templates + 2 && sz.templates <= catalog.size(),
          ErrorKind::InfeasibleSizes, "template count out of range");
  require(sz.forget_templates >= 1 && sz.forget_entities >= 1, ErrorKind::InfeasibleSizes,
          "forget set must be non-empty");
  require(sz.syn_similar_entities >= 2 && sz.domain_entities >= 2 && sz.entity_neighbor_entities >= 2,
          ErrorKind::InfeasibleSizes, "neighbor sets need at least two entities for train/test splits");
  const std::size_t pool = sz.answer_vocab / sz.templates;
  require(pool >= 2 && pool * sz.templates == sz.answer_vocab, ErrorKind::InfeasibleSizes,
          "answer_vocab must be a multiple (>= 2x) of the template count");
  const std::size_t needed = sz.forget_entities + sz.domain_entities + sz.entity_neighbor_entities +
                             sz.syn_similar_entities + sz.syn_different_entities;
  require(sz.entities >= needed, ErrorKind::InfeasibleSizes,
          "not enough entities for disjoint neighbor sets");

  std::mt19937_64 rng(seed);
  ToyCorpus c;
  for (std::size_t t = 0; t < sz.templates; ++t) {
    c.templates.push_back(catalog[t].canonical);
    c.variants.push_back(catalog[t].variants);
  }
  for (std::size_t t = 0; t < sz.templates; ++t)
    for (std::size_t k = 0; k < pool; ++k)
      c.vocab.push_back(pool == catalog[t].answers.size()
                            ? catalog[t].answers[k]
                            : "t" + std::to_string(t) + "_a" + std::to_string(k));
  c.idk_token = c.vocab.size();
  c.vocab.emplace_back(kIdkAnswer);

  c.entity_names = detail::entity_names(sz.entities, rng);
  const std::size_t n_forget = sz.forget_entities;
  const std::size_t dom_begin = n_forget, dom_end = dom_begin + sz.domain_entities;
  const std::size_t ent_begin = dom_end, ent_end = ent_begin + sz.entity_neighbor_entities;

  c.entity_category.resize(sz.entities);
  for (std::size_t e = 0; e < sz.entities; ++e)
    c.entity_category[e] = e < ent_end ? Category::human : kAllCategories[(e - ent_end) % 5];

  c.knowledge.assign(sz.entities, std::vector<std::size_t>(sz.templates, 0));
  for (std::size_t block = 0; block * pool < sz.entities; ++block)
    for (std::size_t t = 0; t < sz.templates; ++t) {
      std::vector<std::size_t> perm(pool);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      shuffle_in_place(perm, rng);
      for (std::size_t k = 0; k < pool && block * pool + k < sz.entities; ++k)
        c.knowledge[block * pool + k][t] = t * pool + perm[k];
    }

  std::map<std::string, std::size_t> entity_index;
  for (std::size_t e = 0; e < sz.entities; ++e) entity_index[c.entity_names[e]] = e;
  std::map<std::string, std::size_t> template_index;
  for (std::size_t t = 0; t < sz.templates; ++t) template_index[c.templates[t]] = t;

  auto make_fact = [&](std::string id, std::size_t t, std::size_t e, SetKind kind) {
    ToyFact f;
    f.id = std::move(id);
    f.template_id = t;
    f.entity_id = e;
    f.answer_token = c.knowledge[e][t];
    f.rendered_question = detail::render(c.templates[t], c.entity_names[e]);
    f.set_kind = kind;
    f.category = c.entity_category[e];
    return f;
  };
  auto to_pair = [&](const ToyFact& f) {
    QAPair p;
    p.id = f.id;
    p.entity = c.entity_names[f.entity_id];
    p.question = f.rendered_question;
    p.answer = c.vocab[f.answer_token];
    p.set_kind = f.set_kind;
    p.category = f.category;
    p.paraphrase_of = f.paraphrase_of;
    return p;
  };

  for (std::size_t e = 0; e < n_forget; ++e)
    for (std::size_t t = 0; t < sz.forget_templates; ++t)
      c.forget.push_back(make_fact("forget-" + std::to_string(c.forget.size()), t, e, SetKind::forget));

  std::vector<std::size_t> other_templates;
  for (std::size_t t = sz.forget_templates; t < sz.templates; ++t) other_templates.push_back(t);
  const std::size_t half = other_templates.size() / 2;
  const std::vector<std::size_t> domain_templates(other_templates.begin(), other_templates.begin() + half);
  const std::vector<std::size_t> entity_templates(other_templates.begin() + half, other_templates.end());

  auto build_split = [&](std::size_t begin, std::size_t end, const std::vector<std::size_t>& ts,
                         SetKind kind, std::string_view prefix, std::vector<ToyFact>& train,
                         std::vector<ToyFact>& test) {
    const std::size_t mid = begin + (end - begin) / 2;
    std::size_t k = 0;
    for (std::size_t e = begin; e < end; ++e)
      for (auto t : ts)
        (e < mid ? train : test).push_back(make_fact(std::string(prefix) + std::to_string(k++), t, e, kind));
  };
  build_split(dom_begin, dom_end, domain_templates, SetKind::domain_neighbor, "domain-", c.domain_train,
              c.domain_test);
  build_split(ent_begin, ent_end, entity_templates, SetKind::entity_neighbor, "entity-", c.entity_train,
              c.entity_test);

  // Syntactically similar neighbors through the clustering / generation pipeline.
  const textsim::RuleBasedMasker masker(c.entity_names);
  std::vector<QAPair> forget_pairs;
  for (const auto& f : c.forget) forget_pairs.push_back(to_pair(f));
  const Thresholds th;
  c.clusters = cluster_forget_questions(forget_pairs, th, masker);

  std::vector<std::string> excluded(c.entity_names.begin(), c.entity_names.begin() + ent_end);
  const auto candidates = select_candidate_entities(c.entity_names, excluded);

  TemplateSubstitutionGenerator generator;
  for (const auto& cl : c.clusters) {
    const auto t = template_index.at(cl.templ.masked);
    for (const auto& name : candidates)
      generator.add(cl.templ.masked, name, {c.vocab[c.knowledge[entity_index.at(name)][t]], {}});
  }
  SynGenOptions opts;
  opts.thresholds = th;
  opts.per_cluster = sz.syn_similar_entities;
  for (const auto* set : {&c.domain_train, &c.domain_test, &c.entity_train, &c.entity_test})
    for (const auto& f : *set) opts.other_set_questions.push_back(f.rendered_question);
  auto generated = generate_syn_similar_pairs(
      c.clusters, candidates, generator, masker, opts,
      [&](std::string_view name) { return c.entity_category[entity_index.at(std::string(name))]; });

  std::map<std::string, std::string> truth;
  for (const auto& p : generated) truth[p.question] = p.answer;
  detail::WorldKnowledge world(std::move(truth));
  const auto probed = probe_filter(generated, world);

  std::vector<std::size_t> syn_entities;
  for (const auto& p : probed.kept) {
    const auto e = entity_index.at(p.entity);
    if (std::find(syn_entities.begin(), syn_entities.end(), e) == syn_entities.end())
      syn_entities.push_back(e);
  }
  require(syn_entities.size() >= 2, ErrorKind::InfeasibleSizes, "syn-similar set too small");
  const std::set<std::size_t> syn_train_entities(syn_entities.begin(),
                                                 syn_entities.begin() + syn_entities.size() / 2);
  for (const auto& p : probed.kept) {
    const auto e = entity_index.at(p.entity);
    auto m = textsim::mask_entities(p.question, masker);
    ToyFact f = make_fact(p.id, template_index.at(m.masked), e, SetKind::syn_similar_neighbor);
    f.rendered_question = p.question;
    (syn_train_entities.contains(e) ? c.syn_train : c.syn_test).push_back(std::move(f));
  }

  // Syntactically different neighbors and general retain data from the rest.
  std::vector<std::size_t> rest;
  for (std::size_t e = ent_end; e < sz.entities; ++e)
    if (std::find(syn_entities.begin(), syn_entities.end(), e) == syn_entities.end()) rest.push_back(e);
  require(rest.size() >= sz.syn_different_entities, ErrorKind::InfeasibleSizes,
          "not enough entities left for the syn-different set");
  std::vector<ToyFact> filler;
  for (std::size_t k = 0; k < rest.size(); ++k) {
    const auto e = rest[k];
    if (k < sz.syn_different_entities) {
      // Same shape as a syn-similar probe: two templates, one fact each.
      for (auto t : {domain_templates.front(), entity_templates.front()})
        c.syn_different.push_back(make_fact("syndiff-" + std::to_string(c.syn_different.size()), t, e,
                                            SetKind::syn_different_neighbor));
    } else {
      for (auto t : other_templates)
        filler.push_back(make_fact("retain-" + std::to_string(filler.size()), t, e,
                                   SetKind::syn_different_neighbor));
    }
  }

  for (const auto* set : {&c.syn_test, &c.syn_different})
    for (const auto& f : *set)
      for (std::size_t k = 0; k < c.variants[f.template_id].size(); ++k) {
        ToyFact p = f;
        p.id = f.id + "-para" + std::to_string(k);
        p.rendered_question = detail::render(c.variants[f.template_id][k], c.entity_names[f.entity_id]);
        p.paraphrase_of = f.id;
        c.paraphrases.push_back(std::move(p));
      }

  for (const auto* set : {&c.forget, &c.domain_train, &c.domain_test, &c.entity_train, &c.entity_test,
                          &c.syn_train, &c.syn_test, &c.syn_different, &filler})
    c.training.insert(c.training.end(), set->begin(), set->end());

  for (const auto* set : {&c.forget, &c.domain_train, &c.domain_test, &c.entity_train, &c.entity_test,
                          &c.syn_train, &c.syn_test, &c.syn_different, &c.paraphrases})
    for (const auto& f : *set) {
      QAPair p = to_pair(f);
      if (f.set_kind == SetKind::syn_similar_neighbor) {
        const auto it = std::find_if(generated.begin(), generated.end(),
                                     [&](const QAPair& g) { return g.id == f.id || g.id == f.paraphrase_of; });
        if (it != generated.end()) p.cluster_id = it->cluster_id;
      }
      c.dataset.push_back(std::move(p));
    }

  std::vector<QAPair> neighbors;
  for (const auto& p : c.dataset)
    if (p.set_kind != SetKind::forget && !p.paraphrase_of) neighbors.push_back(p);
  c.distinctness = validate_distinctness(neighbors, forget_pairs, th, masker);
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Per-fact utility available offline: mean of answer probability and top-1 hit.
inline double fact_utility(const ToyModel& m, const ToyFact& f) {
  const auto p = m.probs(f.template_id, f.entity_id);
  const auto top = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  return 0.5 * (p[f.answer_token] + (top == f.answer_token ? 1.0 : 0.0));
}

inline double set_utility(const ToyModel& m, std::span<const ToyFact> facts) {
  require(!facts.empty(), ErrorKind::EmptySet, "utility of an empty set");
  std::vector<double> us;
  us.reserve(facts.size());
  for (const auto& f : facts) us.push_back(fact_utility(m, f));
  return metrics::aggregate_utilities(us, metrics::Role::retain);
}

inline double forget_efficacy(const ToyModel& m, std::span<const ToyFact> forget) {
  std::vector<double> us;
  us.reserve(forget.size());
  for (const auto& f : forget) us.push_back(fact_utility(m, f));
  return metrics::aggregate_utilities(us, metrics::Role::forget);
}

inline std::vector<metrics::ExampleScore> example_scores(const ToyModel& m, std::span<const ToyFact> facts) {
  std::vector<metrics::ExampleScore> out;
  for (const auto& f : facts) out.push_back({f.id, f.set_kind, f.category, f.paraphrase_of, fact_utility(m, f)});
  return out;
}

inline double mean_nll(const ToyModel& m, std::span<const ToyFact> facts) {
  double s = 0.0;
  for (const auto& f : facts) s -= m.log_prob(f.template_id, f.entity_id, f.answer_token);
  return s / static_cast<double>(facts.size());
}

/// Gradient of the mean NLL over `facts`.
inline Params nll_gradient(const ToyModel& m, std::span<const ToyFact> facts) {
  Params g = Params::zeros(m.templates(), m.entities(), m.vocab());
  const double n = static_cast<double>(facts.size());
  for (const auto& f : facts) {
    auto dz = m.probs(f.template_id, f.entity_id);
    dz[f.answer_token] -= 1.0;
    for (auto& x : dz) x /= n;
    ToyModel::accumulate(g, f.template_id, f.entity_id, dz);
  }
  return g;
}

/// Frobenius norm of the mean-NLL gradient over all parameter blocks, per set.
inline std::map<std::string, double> gradient_norm_probe(
    const ToyModel& m, const std::map<std::string, std::vector<ToyFact>>& probe_sets) {
  std::map<std::string, double> out;
  for (const auto& [name, facts] : probe_sets) {
    require(!facts.empty(), ErrorKind::EmptyProbe, "probe set '" + name + "' is empty");
    out[name] = nll_gradient(m, facts).frobenius_norm();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fitting

struct FitOptions {
  double lr = 0.5;
  int max_epochs = 500;
  double target_mean_prob = 0.98;
  std::uint64_t seed = 0;
};

struct FitResult {
  ToyModel model;
  int epochs = 0;
  std::vector<double> epoch_loss;  // mean NLL after each epoch
};

/// Per-example cross-entropy SGD (shuffled every epoch) until every fact is
/// the argmax and the mean answer probability reaches the target.
inline FitResult fit_initial(ToyModel model, std::span<const ToyFact> facts, const FitOptions& opt = {}) {
  require(!facts.empty(), ErrorKind::EmptySet, "nothing to fit");
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(facts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  FitResult r;
  for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    shuffle_in_place(order, rng);
    for (auto i : order) {
      const auto& f = facts[i];
      auto dz = model.probs(f.template_id, f.entity_id);
      dz[f.answer_token] -= 1.0;
      auto ut = model.theta.u.row(f.template_id);
      auto ve = model.theta.v.row(f.entity_id);
      for (std::size_t j = 0; j < dz.size(); ++j) {
        ut[j] -= opt.lr * dz[j];
        ve[j] -= opt.lr * dz[j];
        model.theta.b[j] -= opt.lr * dz[j];
      }
    }
    r.epoch_loss.push_back(mean_nll(model, facts));
    bool all_top = true;
    double psum = 0.0;
    for (const auto& f : facts) {
      const auto p = model.probs(f.template_id, f.entity_id);
      psum += p[f.answer_token];
      all_top = all_top && model.argmax(f.template_id, f.entity_id) == f.answer_token;
    }
    if (all_top && psum / static_cast<double>(facts.size()) >= opt.target_mean_prob) {
      r.epochs = epoch;
      r.model = std::move(model);
      return r;
    }
  }
  fail(ErrorKind::NonConvergence, "initial fit did not converge in " + std::to_string(opt.max_epochs) + " epochs");
}

// ---------------------------------------------------------------------------
// Unlearning objective on the toy model

/// Objective value and analytic gradient for `spec` with the reference model
/// frozen at `ref`.
struct ToyObjective {
  double value = 0.0;
  Params grad;
};

inline losses::ForgetBatch forget_batch(const ToyModel& m, const ToyModel& ref, std::span<const ToyFact> forget) {
  losses::ForgetBatch fb;
  for (const auto& f : forget) {
    fb.forget.push_back({{m.log_prob(f.template_id, f.entity_id, f.answer_token)},
                         {ref.log_prob(f.template_id, f.entity_id, f.answer_token)},
                         losses::AnswerRole::forget_answer});
    fb.idk.push_back({{m.log_prob(f.template_id, f.entity_id, m.idk_token)},
                      {ref.log_prob(f.template_id, f.entity_id, ref.idk_token)},
                      losses::AnswerRole::idk_answer});
  }
  return fb;
}

inline losses::RetainBatch retain_batch(const ToyModel& m, const ToyModel& ref, std::span<const ToyFact> retain,
                                        losses::Regularizer reg) {
  losses::RetainBatch rb;
  if (reg == losses::Regularizer::GD) {
    for (const auto& f : retain)
      rb.sequences.push_back({{m.log_prob(f.template_id, f.entity_id, f.answer_token)},
                              {},
                              losses::AnswerRole::retain_answer});
  } else if (reg == losses::Regularizer::KL) {
    for (const auto& f : retain) {
      rb.dist_current.push_back(m.probs(f.template_id, f.entity_id));
      rb.dist_ref.push_back(ref.probs(f.template_id, f.entity_id));
    }
  }
  return rb;
}

inline double toy_objective_value(const losses::LossSpec& spec, const ToyModel& m, const ToyModel& ref,
                                  std::span<const ToyFact> forget, std::span<const ToyFact> retain) {
  return losses::combined_objective(spec, forget_batch(m, ref, forget), retain_batch(m, ref, retain, spec.regularizer));
}

inline ToyObjective toy_objective(const losses::LossSpec& spec, const ToyModel& m, const ToyModel& ref,
                                  std::span<const ToyFact> forget, std::span<const ToyFact> retain) {
  const auto fb = forget_batch(m, ref, forget);
  const auto rb = retain_batch(m, ref, retain, spec.regularizer);
  const auto loss = losses::combined(spec, fb, rb);

  ToyObjective out;
  out.value = loss.value;
  out.grad = Params::zeros(m.templates(), m.entities(), m.vocab());
  // d log p(token) / d logits = onehot(token) - p
  auto chain = [&](const ToyFact& f, std::size_t token, double d_seq) {
    if (d_seq == 0.0) return;
    auto dz = m.probs(f.template_id, f.entity_id);
    for (auto& x : dz) x *= -d_seq;
    dz[token] += d_seq;
    ToyModel::accumulate(out.grad, f.template_id, f.entity_id, dz);
  };
  for (std::size_t i = 0; i < loss.d_forget.size(); ++i) chain(forget[i], forget[i].answer_token, loss.d_forget[i]);
  for (std::size_t i = 0; i < loss.d_idk.size(); ++i) chain(forget[i], m.idk_token, loss.d_idk[i]);
  for (std::size_t i = 0; i < loss.d_retain.size(); ++i) chain(retain[i], retain[i].answer_token, loss.d_retain[i]);
  for (std::size_t i = 0; i < loss.d_retain_logits.size(); ++i)
    ToyModel::accumulate(out.grad, retain[i].template_id, retain[i].entity_id, loss.d_retain_logits[i]);
  return out;
}

struct UnlearnOptions {
  double lr = 0.5;
  int max_steps = 2000;
  double fe_lo = 0.65;
  double fe_hi = 0.75;
  /// Step halvings allowed when a step would jump past fe_hi.
  int max_backtracks = 40;
};

struct TraceStep {
  int step = 0;
  double loss = 0.0;
  double forget_efficacy = 0.0;
  double lr = 0.0;  // step size actually applied to reach this state
  std::map<std::string, double> utility;
  std::map<std::string, double> grad_norm;
};

struct RunTrace {
  std::vector<TraceStep> steps;
};

struct UnlearnResult {
  ToyModel model;
  RunTrace trace;
  bool band_reached = false;
};

/// Sets tracked at every step: utilities and gradient-norm probes.
struct Tracking {
  std::map<std::string, std::vector<ToyFact>> utility_sets;
  std::map<std::string, std::vector<ToyFact>> probe_sets;
};

/// Full-batch gradient descent on the combined objective, θ_ref frozen at
/// entry. Stops at the first state whose forget efficacy lies inside
/// [fe_lo, fe_hi]; a step that would overshoot fe_hi is retried with half the
/// step size. Step 0 of the trace is the entry state.
inline UnlearnResult run_unlearning(const ToyModel& start, const losses::LossSpec& spec,
                             std::span<const ToyFact> forget, std::span<const ToyFact> retain_reg,
                             const UnlearnOptions& opt, const Tracking& tracking = {}) {
  spec.validate();
  require(!forget.empty(), ErrorKind::EmptyBatch, "forget set is empty");
  require(spec.regularizer == losses::Regularizer::none || !retain_reg.empty(), ErrorKind::EmptyBatch,
          "regularizer needs retain facts");
  const ToyModel ref = start;
  UnlearnResult r;
  r.model = start;

  auto in_band = [&](double fe) { return fe >= opt.fe_lo && fe <= opt.fe_hi; };
  auto record = [&](int step, double loss, double fe, double lr) {
    TraceStep s;
    s.step = step;
    s.loss = loss;
    s.forget_efficacy = fe;
    s.lr = lr;
    for (const auto& [name, facts] : tracking.utility_sets) s.utility[name] = set_utility(r.model, facts);
    if (!tracking.probe_sets.empty()) s.grad_norm = gradient_norm_probe(r.model, tracking.probe_sets);
    r.trace.steps.push_back(std::move(s));
  };

  auto obj = toy_objective(spec, r.model, ref, forget, retain_reg);
  double fe = forget_efficacy(r.model, forget);
  record(0, obj.value, fe, 0.0);
  r.band_reached = in_band(fe);

  for (int step = 1; step <= opt.max_steps && !r.band_reached; ++step) {
    double lr = opt.lr;
    ToyModel next = r.model;
    next.theta.axpy(-lr, obj.grad);
    double next_fe = forget_efficacy(next, forget);
    for (int k = 0; k < opt.max_backtracks && next_fe > opt.fe_hi && fe < opt.fe_lo; ++k) {
      lr *= 0.5;
      next = r.model;
      next.theta.axpy(-lr, obj.grad);
      next_fe = forget_efficacy(next, forget);
    }
    r.model = std::move(next);
    fe = next_fe;
    obj = toy_objective(spec, r.model, ref, forget, retain_reg);
    record(step, obj.value, fe, lr);
    r.band_reached = in_band(fe);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Method defaults and experiments

struct MethodDefaults {
  double lr = 0.5;
  std::optional<double> beta;
};

/// Step sizes keep the GA : NPO : IDK : DPO proportions of the full-scale
/// real-world learning rates (5e-6 : 3e-5 : 3e-6 : 8e-6), scaled by 1e5.
inline MethodDefaults toy_defaults(losses::Method m) {
  switch (m) {
    case losses::Method::GA: return {0.5, std::nullopt};
    case losses::Method::NPO: return {3.0, 0.1};
    case losses::Method::IDK: return {0.3, std::nullopt};
    case losses::Method::DPO: return {0.8, 0.1};
  }
  return {};
}

inline losses::LossSpec toy_spec(losses::Method m, losses::Regularizer reg, double reg_weight = 1.0) {
  return {m, reg, toy_defaults(m).beta, reg_weight};
}

/// Probe and utility sets used by toy runs.
inline Tracking default_tracking(const ToyCorpus& c) {
  Tracking t;
  t.utility_sets = {{"domain", c.domain()},
                    {"entity", c.entity()},
                    {"syn_similar", c.syn_similar()},
                    {"syn_different", c.syn_different}};
  t.probe_sets = {{"syn_similar", c.syn_test}, {"syn_different", c.syn_different}};
  return t;
}

/// RUD (percent) of each tracked utility set between the first and last trace step.
inline std::map<std::string, double> trace_rud(const RunTrace& trace) {
  std::map<std::string, double> out;
  if (trace.steps.empty()) return out;
  for (const auto& [name, before] : trace.steps.front().utility)
    out[name] = metrics::relative_utility_drop(before, trace.steps.back().utility.at(name));
  return out;
}

struct ToyRunReport {
  std::map<std::string, double> rud_by_set;         // keyed by set kind
  std::map<std::string, double> rud_by_category;    // all neighbor facts
  std::map<std::string, double> rud_by_paraphrase;  // paraphrase renderings, keyed by set kind
};

/// RUD between two models over every neighbor set, computed through the
/// same grouping code used for logged evaluations.
inline ToyRunReport toy_report(const ToyCorpus& c, const ToyModel& before, const ToyModel& after) {
  std::vector<ToyFact> facts;
  for (const auto& set : {c.domain(), c.entity(), c.syn_similar(), c.syn_different, c.paraphrases})
    facts.insert(facts.end(), set.begin(), set.end());
  const auto b = example_scores(before, facts);
  const auto a = example_scores(after, facts);
  ToyRunReport r;
  r.rud_by_set = metrics::rud_by_group(b, a, metrics::GroupKey::set_kind);
  r.rud_by_category = metrics::rud_by_group(b, a, metrics::GroupKey::category);
  r.rud_by_paraphrase = metrics::rud_by_group(b, a, metrics::GroupKey::paraphrase_group);
  return r;
}

enum class RetainSet { domain, entity, syn_similar };

inline constexpr RetainSet kRetainSets[] = {RetainSet::domain, RetainSet::entity, RetainSet::syn_similar};

inline std::string_view to_string(RetainSet s) {
  switch (s) {
    case RetainSet::domain: return "domain";
    case RetainSet::entity: return "entity";
    case RetainSet::syn_similar: return "syn_similar";
  }
  return "domain";
}

inline RetainSet parse_retain_set(std::string_view s) {
  for (auto r : kRetainSets)
    if (to_string(r) == s) return r;
  fail(ErrorKind::InvalidArgument, "unknown retain set '" + std::string(s) + "'");
}

inline const std::vector<ToyFact>& train_split(const ToyCorpus& c, RetainSet s) {
  switch (s) {
    case RetainSet::domain: return c.domain_train;
    case RetainSet::entity: return c.entity_train;
    case RetainSet::syn_similar: return c.syn_train;
  }
  return c.domain_train;
}

inline const std::vector<ToyFact>& test_split(const ToyCorpus& c, RetainSet s) {
  switch (s) {
    case RetainSet::domain: return c.domain_test;
    case RetainSet::entity: return c.entity_test;
    case RetainSet::syn_similar: return c.syn_test;
  }
  return c.domain_test;
}

struct SweepOptions {
  std::vector<losses::Method> methods = {losses::Method::GA, losses::Method::DPO, losses::Method::NPO,
                                         losses::Method::IDK};
  std::vector<losses::Regularizer> regularizers = {losses::Regularizer::GD, losses::Regularizer::KL};
  int max_steps = 2000;
  double reg_weight = 1.0;
  unsigned workers = 1;
  /// Per-method step size and beta; methods not listed use toy_defaults.
  std::map<losses::Method, MethodDefaults> hyper;

  MethodDefaults defaults_for(losses::Method m) const {
    const auto it = hyper.find(m);
    return it == hyper.end() ? toy_defaults(m) : it->second;
  }
};

struct SweepRun {
  losses::Regularizer reg;
  RetainSet train;
  losses::Method method;
  bool band_reached = false;
  int steps = 0;
  double forget_efficacy = 0.0;
  std::map<RetainSet, double> rud;  // test set -> RUD
};

struct SweepCell {
  losses::Regularizer reg;
  RetainSet train;
  RetainSet test;
  double rud = 0.0;  // mean over methods
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<SweepCell> cells;

  double at(losses::Regularizer reg, RetainSet train, RetainSet test) const {
    for (const auto& c : cells)
      if (c.reg == reg && c.train == train && c.test == test) return c.rud;
    fail(ErrorKind::InvalidArgument, "no such sweep cell");
  }
};

/// For every regularizer, train retain set and method: unlearn with that
/// regularization set and measure RUD on every disjoint test set. Cells
/// average over methods. Runs are independent and may execute in parallel;
/// assembly order is fixed.
inline SweepResult regularization_sweep(const ToyModel& fitted, const ToyCorpus& c, const SweepOptions& opt) {
  std::vector<SweepRun> runs;
  for (auto reg : opt.regularizers)
    for (auto train : kRetainSets)
      for (auto m : opt.methods) runs.push_back(SweepRun{.reg = reg, .train = train, .method = m, .rud = {}});

  std::map<RetainSet, double> before;
  for (auto test : kRetainSets) before[test] = set_utility(fitted, test_split(c, test));

  auto execute = [&](SweepRun& run) {
    const auto hp = opt.defaults_for(run.method);
    UnlearnOptions uo;
    uo.lr = hp.lr;
    uo.max_steps = opt.max_steps;
    const losses::LossSpec spec{run.method, run.reg, hp.beta, opt.reg_weight};
    const auto res = run_unlearning(fitted, spec, c.forget, train_split(c, run.train), uo);
    run.band_reached = res.band_reached;
    run.steps = res.trace.steps.back().step;
    run.forget_efficacy = res.trace.steps.back().forget_efficacy;
    for (auto test : kRetainSets)
      run.rud[test] = metrics::relative_utility_drop(before[test], set_utility(res.model, test_split(c, test)));
  };

  const unsigned workers = std::max(1u, opt.workers);
  if (workers == 1) {
    for (auto& run : runs) execute(run);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < runs.size(); i += workers) execute(runs[i]);
      });
  }

  SweepResult out;
  for (auto reg : opt.regularizers)
    for (auto train : kRetainSets)
      for (auto test : kRetainSets) {
        std::vector<double> vals;
        for (const auto& run : runs)
          if (run.reg == reg && run.train == train) vals.push_back(run.rud.at(test));
        out.cells.push_back({reg, train, test, losses::tree_sum(vals) / static_cast<double>(vals.size())});
      }
  out.runs = std::move(runs);
  return out;
}

}  // namespace unlearn::toylab
