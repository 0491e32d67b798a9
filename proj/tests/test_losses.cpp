// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "unlearn/losses.hpp"

using namespace unlearn;
using namespace unlearn::losses;

namespace {

ScoredSequence seq(std::vector<double> cur, std::vector<double> ref = {},
                   AnswerRole role = AnswerRole::forget_answer) {
  return {std::move(cur), std::move(ref), role};
}

std::vector<double> random_logprobs(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-3.0, -0.01);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(ClosedForm, NpoAtZeroLogRatio) {
  const std::vector<ScoredSequence> b = {seq({-0.5, -1.0}, {-0.5, -1.0}), seq({-2.0}, {-2.0})};
  for (double beta : {0.05, 0.1, 1.0, 4.0})
    EXPECT_NEAR(npo_loss(b, beta), 2.0 / beta * std::numbers::ln2, 1e-12);
}

TEST(ClosedForm, KlOfIdenticalDistributionsIsZero) {
  const std::vector<Distribution> p = {{0.2, 0.3, 0.5}, {0.9, 0.05, 0.05}};
  EXPECT_NEAR(kl_reg(p, p), 0.0, 1e-12);
  const std::vector<Distribution> q = {{0.3, 0.3, 0.4}, {0.9, 0.05, 0.05}};
  const double expected = (0.2 * std::log(0.2 / 0.3) + 0.5 * std::log(0.5 / 0.4)) / 2.0;
  EXPECT_NEAR(kl_reg(p, q), expected, 1e-15);
}

TEST(ClosedForm, DpoWithEqualMarginsIsLn2) {
  const std::vector<ScoredSequence> neg = {seq({-1.0}, {-1.5})};
  const std::vector<ScoredSequence> pos = {seq({-2.0}, {-2.5}, AnswerRole::idk_answer)};
  for (double beta : {0.1, 1.0, 7.0}) EXPECT_NEAR(dpo_loss(neg, pos, beta), std::numbers::ln2, 1e-12);
}

TEST(ClosedForm, GaIdkAndGdAreMeanSequenceLogProbs) {
  const std::vector<ScoredSequence> f = {seq({-1.0, -2.0}), seq({-0.5})};
  EXPECT_DOUBLE_EQ(ga_loss(f), (-3.0 - 0.5) / 2.0);
  const std::vector<ScoredSequence> i = {seq({-1.0, -2.0}, {}, AnswerRole::idk_answer)};
  EXPECT_DOUBLE_EQ(idk_loss(i), 3.0);
  const std::vector<ScoredSequence> r = {seq({-0.25}, {}, AnswerRole::retain_answer)};
  EXPECT_DOUBLE_EQ(gd_reg(r), 0.25);
}

TEST(NpoLimit, ApproachesGaAsBetaShrinks) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.0, 0.5);
  const double beta = 1e-4;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredSequence> batch;
    const std::size_t n = 1 + rng() % 8;
    for (std::size_t i = 0; i < n; ++i) {
      auto ref = random_logprobs(rng, 1 + rng() % 6);
      auto cur = ref;
      for (auto& x : cur) x = std::min(0.0, x + noise(rng));
      batch.push_back(seq(cur, ref));
    }
    const auto npo_g = npo(batch, beta).d_seq;
    const auto ga_g = ga(batch).d_seq;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += (npo_g[i] - ga_g[i]) * (npo_g[i] - ga_g[i]);
      den += ga_g[i] * ga_g[i];
    }
    ASSERT_LT(std::sqrt(num / den), 1e-3) << "trial " << trial;
  }
}

TEST(Gradients, SequenceLossesMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  std::vector<ScoredSequence> f, idk_b, ret;
  for (int i = 0; i < 4; ++i) {
    f.push_back(seq(random_logprobs(rng, 3), random_logprobs(rng, 3)));
    idk_b.push_back(seq(random_logprobs(rng, 2), random_logprobs(rng, 2), AnswerRole::idk_answer));
    ret.push_back(seq(random_logprobs(rng, 2), {}, AnswerRole::retain_answer));
  }
  // Perturbing one token of one sequence moves that sequence's sum one-for-one.
  auto check = [](std::vector<ScoredSequence> batch, const std::function<double(std::span<const ScoredSequence>)>& f,
                  const std::vector<double>& d_seq) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto g = [&](const std::vector<double>& x) {
        auto b = batch;
        b[i].logprob_current = x;
        return f(b);
      };
      EXPECT_NEAR(oracle::central_difference(g, batch[i].logprob_current, 0), d_seq[i], 1e-6);
    }
  };
  check(f, [](auto b) { return ga_loss(b); }, ga(f).d_seq);
  check(f, [](auto b) { return npo_loss(b, 0.7); }, npo(f, 0.7).d_seq);
  check(idk_b, [](auto b) { return idk_loss(b); }, idk(idk_b).d_seq);
  check(ret, [](auto b) { return gd_reg(b); }, gd(ret).d_seq);

  const auto d = dpo(f, idk_b, 0.4);
  check(f, [&](auto b) { return dpo_loss(b, idk_b, 0.4); }, d.d_neg);
  check(idk_b, [&](auto b) { return dpo_loss(f, b, 0.4); }, d.d_pos);
}

TEST(Gradients, KlLogitGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<std::vector<double>> logits(3, std::vector<double>(5));
  std::vector<Distribution> ref;
  for (auto& row : logits) {
    for (auto& x : row) x = z(rng);
    std::vector<double> r(5);
    for (auto& x : r) x = z(rng);
    ref.push_back(oracle::softmax(r));
  }
  std::vector<Distribution> cur;
  for (const auto& row : logits) cur.push_back(oracle::softmax(row));
  const auto g = kl(cur, ref).d_logits;
  for (std::size_t i = 0; i < logits.size(); ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      auto f = [&](const std::vector<double>& row) {
        auto c = cur;
        c[i] = oracle::softmax(row);
        return kl_reg(c, ref);
      };
      EXPECT_NEAR(oracle::central_difference(f, logits[i], j), g[i][j], 1e-6);
    }
}

TEST(Validation, ErrorKinds) {
  const std::vector<ScoredSequence> none;
  EXPECT_EQ(kind_of([&] { ga(none); }), ErrorKind::EmptyBatch);
  const std::vector<ScoredSequence> retain_role = {seq({-1.0}, {}, AnswerRole::retain_answer)};
  EXPECT_EQ(kind_of([&] { ga(retain_role); }), ErrorKind::WrongRole);
  const std::vector<ScoredSequence> no_ref = {seq({-1.0})};
  EXPECT_EQ(kind_of([&] { npo(no_ref, 0.1); }), ErrorKind::MissingReference);
  const std::vector<ScoredSequence> bad_len = {seq({-1.0, -1.0}, {-1.0})};
  EXPECT_EQ(kind_of([&] { npo(bad_len, 0.1); }), ErrorKind::LengthMismatch);
  const std::vector<ScoredSequence> empty_seq = {seq({})};
  EXPECT_EQ(kind_of([&] { ga(empty_seq); }), ErrorKind::EmptySequence);

  const std::vector<Distribution> p = {{0.5, 0.5}}, unnorm = {{0.5, 0.6}}, holes = {{1.0, 0.0}};
  const std::vector<Distribution> q = {{0.0, 1.0}};
  EXPECT_EQ(kind_of([&] { kl(unnorm, p); }), ErrorKind::NotNormalized);
  EXPECT_EQ(kind_of([&] { kl(p, q); }), ErrorKind::SupportViolation);
  EXPECT_NO_THROW(kl(holes, p));
  EXPECT_EQ(kind_of([&] { kl(p, {}); }), ErrorKind::LengthMismatch);
}

TEST(Combined, AddsWeightedRegularizer) {
  ForgetBatch f;
  f.forget = {seq({-1.0}, {-1.0})};
  f.idk = {seq({-2.0}, {-2.0}, AnswerRole::idk_answer)};
  RetainBatch r;
  r.sequences = {seq({-0.5}, {}, AnswerRole::retain_answer)};
  r.dist_current = {{0.5, 0.5}};
  r.dist_ref = {{0.25, 0.75}};

  LossSpec s;
  s.method = Method::GA;
  s.regularizer = Regularizer::GD;
  s.reg_weight = 2.0;
  const auto c = combined(s, f, r);
  EXPECT_DOUBLE_EQ(c.value, -1.0 + 2.0 * 0.5);
  EXPECT_DOUBLE_EQ(c.d_retain[0], -2.0);

  s.regularizer = Regularizer::KL;
  EXPECT_NEAR(combined_objective(s, f, r), -1.0 + 2.0 * kl_reg(r.dist_current, r.dist_ref), 1e-15);

  s.method = Method::NPO;
  EXPECT_THROW(combined(s, f, r), Error);
  s.beta = 0.1;
  EXPECT_NEAR(combined(s, f, r).method_value, 20.0 * std::numbers::ln2, 1e-12);
  s.method = Method::IDK;
  EXPECT_THROW(combined(s, f, r), Error);
}

TEST(Parsing, MethodAndRegularizerNamesRoundTrip) {
  for (auto m : {Method::GA, Method::NPO, Method::DPO, Method::IDK}) EXPECT_EQ(parse_method(to_string(m)), m);
  for (auto r : {Regularizer::none, Regularizer::GD, Regularizer::KL})
    EXPECT_EQ(parse_regularizer(to_string(r)), r);
  EXPECT_THROW(parse_method("SGD"), Error);
}

TEST(TreeSum, DependsOnlyOnLength) {
  const std::vector<double> v = {1e16, 1.0, -1e16, 1.0};
  EXPECT_EQ(tree_sum(v), (1e16 + 1.0) + (-1e16 + 1.0));
  EXPECT_EQ(tree_sum(std::vector<double>{}), 0.0);
}
