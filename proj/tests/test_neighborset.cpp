// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>
#include <set>

#include "unlearn/neighborset.hpp"

using namespace unlearn;

namespace {

QAPair qa(std::string id, std::string entity, std::string q, std::string a, SetKind k = SetKind::forget) {
  QAPair p;
  p.id = std::move(id);
  p.entity = std::move(entity);
  p.question = std::move(q);
  p.answer = std::move(a);
  p.set_kind = k;
  return p;
}

/// Connected components of the >= theta graph, computed by repeated flooding.
std::vector<std::set<std::size_t>> components_oracle(const SimilarityMatrix& sim, double theta) {
  const std::size_t n = sim.size();
  std::vector<int> label(n, -1);
  std::vector<std::set<std::size_t>> out;
  for (std::size_t s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    std::set<std::size_t> comp{s};
    label[s] = static_cast<int>(out.size());
    bool grew = true;
    while (grew) {
      grew = false;
      for (std::size_t i = 0; i < n; ++i)
        if (label[i] < 0)
          for (auto j : comp)
            if (sim[i][j] >= theta) {
              comp.insert(i);
              label[i] = label[s];
              grew = true;
              break;
            }
    }
    out.push_back(comp);
  }
  return out;
}

}  // namespace

TEST(Thresholds, ValidateRejectsBadOrdering) {
  Thresholds t;
  EXPECT_NO_THROW(t.validate());
  t.theta_low = 0.8;
  EXPECT_THROW(t.validate(), Error);
  t = {};
  t.min_cluster_size = 1;
  EXPECT_THROW(t.validate(), Error);
}

TEST(Cluster, FourQuestionsGiveOneCliqueMatchingOracle) {
  const std::vector<QAPair> forget = {
      qa("q1", "Ada Lovelace", "When was Ada Lovelace born?", "1815"),
      qa("q2", "Alan Turing", "When was Alan Turing born?", "1912"),
      qa("q3", "Grace Hopper", "When was Grace Hopper born?", "1906"),
      qa("q4", "Ada Lovelace", "Which machine did Ada Lovelace write programs for?", "the Analytical Engine"),
  };
  const textsim::RuleBasedMasker m;
  const Thresholds th;
  std::vector<textsim::MaskedSentence> masked;
  for (const auto& q : forget) masked.push_back(textsim::mask_entities(q.question, m));
  const auto sim = pairwise_similarity(masked);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LE(sim[i][3], 0.3);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_GE(sim[i][j], 0.8);
  }
  const auto comps = components_oracle(sim, th.theta_high);
  ASSERT_EQ(comps.size(), 2U);

  const auto clusters = cluster_forget_questions(forget, th, m);
  ASSERT_EQ(clusters.size(), 1U);
  EXPECT_EQ(clusters[0].member_ids, (std::vector<std::string>{"q1", "q2", "q3"}));
  EXPECT_EQ(clusters[0].templ.masked, "When was {X} born?");
  EXPECT_EQ(clusters[0].entity_slot, 0U);
  EXPECT_DOUBLE_EQ(clusters[0].min_intra_similarity, 1.0);
}

TEST(Cluster, TwoQuestionsAreBelowMinimumSize) {
  const std::vector<QAPair> forget = {
      qa("a", "Ada Lovelace", "When was Ada Lovelace born?", "1815"),
      qa("b", "Alan Turing", "When was Alan Turing born?", "1912"),
  };
  EXPECT_TRUE(cluster_forget_questions(forget, {}, textsim::RuleBasedMasker{}).empty());
}

TEST(Cluster, EmptyForgetSetIsAnError) {
  try {
    cluster_forget_questions({}, {}, textsim::RuleBasedMasker{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyForgetSet);
  }
}

TEST(Cluster, ChainedComponentIsPrunedToAClique) {
  // a~b~c~d~e form a chain at high threshold but are not a clique.
  const std::vector<QAPair> forget = {
      qa("a", "", "aaaaaaaaaa", ""), qa("b", "", "aaaaaaaabb", ""), qa("c", "", "aaaaaabbbb", ""),
      qa("d", "", "aaaabbbbbb", ""), qa("e", "", "aabbbbbbbb", ""),
  };
  Thresholds th;
  th.theta_high = 0.75;
  const auto clusters = cluster_forget_questions(forget, th, textsim::DictionaryMasker({}));
  for (const auto& c : clusters) {
    EXPECT_GE(c.member_ids.size(), 3U);
    for (const auto& x : c.member_ids)
      for (const auto& y : c.member_ids) {
        const auto& qx = std::find_if(forget.begin(), forget.end(), [&](auto& q) { return q.id == x; })->question;
        const auto& qy = std::find_if(forget.begin(), forget.end(), [&](auto& q) { return q.id == y; })->question;
        EXPECT_GE(textsim::levenshtein_similarity(qx, qy).value, th.theta_high);
      }
  }
}

TEST(Cluster, RandomCorporaAlwaysYieldValidCliques) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> shapes = {"When was {} born?", "Where did {} study?", "Who married {}?",
                                           "What company did {} found in 1999?"};
  const std::vector<std::string> names = {"Ann Lee", "Bo Diaz", "Cy Young", "Di Fox", "Ed Park", "Fay Wray"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<QAPair> forget;
    const int n = 4 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      auto q = shapes[rng() % shapes.size()];
      const auto& who = names[rng() % names.size()];
      q.replace(q.find("{}"), 2, who);
      forget.push_back(qa("id" + std::to_string(i), who, q, "x"));
    }
    const Thresholds th;
    const textsim::RuleBasedMasker m;
    const auto clusters = cluster_forget_questions(forget, th, m, 1 + trial % 3);
    std::set<std::string> seen;
    for (const auto& c : clusters) {
      EXPECT_GE(c.member_ids.size(), 3U);
      for (const auto& id : c.member_ids) EXPECT_TRUE(seen.insert(id).second) << "member in two clusters";
      EXPECT_GE(c.min_intra_similarity, th.theta_high);
    }
  }
}

TEST(Cluster, WorkerCountDoesNotChangeTheMatrix) {
  std::vector<textsim::MaskedSentence> xs;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 40; ++i) xs.push_back(textsim::MaskedSentence::literal(std::to_string(rng() % 100000)));
  EXPECT_EQ(pairwise_similarity(xs, 1), pairwise_similarity(xs, 7));
}

TEST(Candidates, ExcludesAndDeduplicatesInOrder) {
  const std::vector<std::string> retain = {"B", "A", "C", "B", "D"}, excluded = {"C"};
  EXPECT_EQ(select_candidate_entities(retain, excluded), (std::vector<std::string>{"B", "A", "D"}));
}

namespace {

std::vector<SyntacticCluster> born_cluster() {
  const std::vector<QAPair> forget = {
      qa("f1", "Ada Lovelace", "When was Ada Lovelace born?", "1815"),
      qa("f2", "Alan Turing", "When was Alan Turing born?", "1912"),
      qa("f3", "Grace Hopper", "When was Grace Hopper born?", "1906"),
  };
  return cluster_forget_questions(forget, {}, textsim::RuleBasedMasker{});
}

}  // namespace

TEST(SynGeneration, FillsTemplateWithCandidates) {
  const auto clusters = born_cluster();
  TemplateSubstitutionGenerator gen;
  gen.add("When was {X} born?", "Marie Curie", {"1867", {"November 7, 1867"}});
  gen.add("When was {X} born?", "Niels Bohr", {"1885", {}});
  const std::vector<std::string> cands = {"Marie Curie", "Nobody Known", "Niels Bohr"};
  SynGenOptions opts;
  opts.other_set_questions = {"Which lab employed Lise Meitner?"};
  const auto out = generate_syn_similar_pairs(clusters, cands, gen, textsim::RuleBasedMasker{}, opts);
  ASSERT_EQ(out.size(), 2U);
  EXPECT_EQ(out[0].question, "When was Marie Curie born?");
  EXPECT_EQ(out[0].set_kind, SetKind::syn_similar_neighbor);
  EXPECT_EQ(out[0].cluster_id, 0);
  EXPECT_EQ(out[0].aliases, std::vector<std::string>{"November 7, 1867"});
  EXPECT_EQ(out[1].entity, "Niels Bohr");
}

TEST(SynGeneration, RespectsPerClusterLimit) {
  TemplateSubstitutionGenerator gen;
  for (const char* e : {"A B", "C D", "E F"}) gen.add("When was {X} born?", e, {"1900", {}});
  SynGenOptions opts;
  opts.per_cluster = 1;
  const std::vector<std::string> cands = {"A B", "C D", "E F"};
  EXPECT_EQ(generate_syn_similar_pairs(born_cluster(), cands, gen, textsim::RuleBasedMasker{}, opts).size(), 1U);
}

TEST(SynGeneration, QuestionTooCloseToOtherSetsIsRejected) {
  TemplateSubstitutionGenerator gen;
  gen.add("When was {X} born?", "Marie Curie", {"1867", {}});
  SynGenOptions opts;
  opts.other_set_questions = {"When was Pierre Curie born?"};
  const std::vector<std::string> cands = {"Marie Curie"};
  try {
    generate_syn_similar_pairs(born_cluster(), cands, gen, textsim::RuleBasedMasker{}, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoValidFill);
  }
}

TEST(SynGeneration, EmptyCandidatesIsNoValidFill) {
  TemplateSubstitutionGenerator gen;
  try {
    generate_syn_similar_pairs(born_cluster(), {}, gen, textsim::RuleBasedMasker{}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoValidFill);
  }
}

namespace {

class ThrowingGenerator final : public QaGenerator {
 public:
  std::optional<GeneratedQa> generate(const textsim::MaskedSentence&, std::size_t, std::string_view) override {
    fail(ErrorKind::Timeout, "slow");
  }
};

class ScriptedModel final : public TextGenerator {
 public:
  std::string generate(std::string_view prompt, int) override {
    return prompt.find("Curie") != std::string_view::npos ? "She was born in 1867." : "No idea.";
  }
};

}  // namespace

TEST(SynGeneration, GeneratorFailureBecomesGenerationFailed) {
  ThrowingGenerator gen;
  const std::vector<std::string> cands = {"Marie Curie"};
  try {
    generate_syn_similar_pairs(born_cluster(), cands, gen, textsim::RuleBasedMasker{}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GenerationFailed);
  }
}

TEST(Probe, PartitionsInputPreservingOrder) {
  std::vector<QAPair> pairs = {
      qa("a", "Marie Curie", "When was Marie Curie born?", "1867", SetKind::syn_similar_neighbor),
      qa("b", "Niels Bohr", "When was Niels Bohr born?", "1885", SetKind::syn_similar_neighbor),
      qa("c", "Pierre Curie", "When was Pierre Curie born?", "1859", SetKind::syn_similar_neighbor),
  };
  pairs[2].aliases = {"1867"};
  ScriptedModel model;
  const auto r = probe_filter(pairs, model);
  EXPECT_EQ(r.kept.size() + r.dropped.size(), pairs.size());
  ASSERT_EQ(r.kept.size(), 2U);
  EXPECT_EQ(r.kept[0].id, "a");
  EXPECT_EQ(r.kept[1].id, "c");
  EXPECT_EQ(r.dropped[0].id, "b");
}

TEST(Probe, MatcherIsCaseInsensitiveContainment) {
  const auto p = qa("x", "", "", "Paris");
  EXPECT_TRUE(answer_or_alias_match("it is PARIS, France", p));
  EXPECT_FALSE(answer_or_alias_match("Lyon", p));
}

TEST(Distinctness, FlagsCloseNeighborsAndEntityOverlap) {
  const std::vector<QAPair> forget = {qa("f1", "Ada Lovelace", "When was Ada Lovelace born?", "1815")};
  std::vector<QAPair> neighbors = {
      qa("d1", "Charles Babbage", "When was Charles Babbage born?", "1791", SetKind::domain_neighbor),
      qa("e1", "Lord Byron", "Which poems made Lord Byron famous across Europe?", "Childe Harold",
         SetKind::entity_neighbor),
      qa("s1", "Lord Byron", "When was Lord Byron born?", "1788", SetKind::syn_similar_neighbor),
  };
  neighbors[2].cluster_id = 0;
  const auto rep = validate_distinctness(neighbors, forget, {}, textsim::RuleBasedMasker{});
  EXPECT_FALSE(rep.ok());
  ASSERT_EQ(rep.violations.size(), 1U);
  EXPECT_EQ(rep.violations[0].neighbor_id, "d1");
  EXPECT_DOUBLE_EQ(rep.violations[0].similarity, 1.0);
  EXPECT_EQ(rep.entity_overlaps, std::vector<std::string>{"s1"});
  EXPECT_EQ(rep.checked_pairs, 2U);
}

TEST(Dataset, ValidationCatchesDuplicatesAndMissingCluster) {
  std::vector<QAPair> d = {qa("a", "x", "q?", "a"), qa("a", "y", "r?", "b")};
  EXPECT_THROW(validate_dataset(d), Error);
  d[1].id = "b";
  EXPECT_NO_THROW(validate_dataset(d));
  d[1].set_kind = SetKind::syn_similar_neighbor;
  EXPECT_THROW(validate_dataset(d), Error);
}
