// SPDX-License-Identifier: Apache-2.0
#pragma once

// Unlearning objectives over per-token log-probabilities of a current and a
// frozen reference model. Every method loss is oriented so that minimizing it
// unlearns; the combined objective is method loss + reg_weight * regularizer.
//
// Each loss also returns its derivative with respect to the summed answer
// log-probability of each sequence. Since a sequence's log-probability is the
// sum of its token log-probabilities, that is also the derivative with respect
// to every individual token entry.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unlearn/error.hpp"

namespace unlearn::losses {

enum class AnswerRole { forget_answer, idk_answer, retain_answer };

struct ScoredSequence {
  std::vector<double> logprob_current;
  std::vector<double> logprob_ref;  // empty when no reference model is involved
  AnswerRole role = AnswerRole::forget_answer;
};

enum class Method { GA, NPO, DPO, IDK };
enum class Regularizer { none, GD, KL };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::GA: return "GA";
    case Method::NPO: return "NPO";
    case Method::DPO: return "DPO";
    case Method::IDK: return "IDK";
  }
  return "GA";
}

inline std::string_view to_string(Regularizer r) {
  switch (r) {
    case Regularizer::none: return "none";
    case Regularizer::GD: return "GD";
    case Regularizer::KL: return "KL";
  }
  return "none";
}

inline Method parse_method(std::string_view s) {
  for (auto m : {Method::GA, Method::NPO, Method::DPO, Method::IDK})
    if (to_string(m) == s) return m;
  fail(ErrorKind::InvalidArgument, "unknown method '" + std::string(s) + "'");
}

inline Regularizer parse_regularizer(std::string_view s) {
  for (auto r : {Regularizer::none, Regularizer::GD, Regularizer::KL})
    if (to_string(r) == s) return r;
  fail(ErrorKind::InvalidArgument, "unknown regularizer '" + std::string(s) + "'");
}

struct LossSpec {
  Method method = Method::GA;
  Regularizer regularizer = Regularizer::none;
  std::optional<double> beta;  // NPO and DPO only
  double reg_weight = 1.0;

  bool needs_beta() const { return method == Method::NPO || method == Method::DPO; }

  void validate() const {
    require(needs_beta() == beta.has_value(), ErrorKind::InvalidArgument,
            needs_beta() ? "beta is required for NPO/DPO" : "beta is only valid for NPO/DPO");
    if (beta) require(*beta > 0.0, ErrorKind::InvalidArgument, "beta must be positive");
    require(reg_weight > 0.0, ErrorKind::InvalidArgument, "reg_weight must be positive");
  }
};

/// Pairwise (tree) summation; the reduction order depends only on the length.
inline double tree_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  if (v.size() == 1) return v[0];
  if (v.size() == 2) return v[0] + v[1];
  const std::size_t half = v.size() / 2;
  return tree_sum(v.first(half)) + tree_sum(v.subspan(half));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

struct SequenceLoss {
  double value = 0.0;
  std::vector<double> d_seq;  // d value / d sum(logprob_current), per sequence
};

namespace detail {

inline void check_batch(std::span<const ScoredSequence> batch, AnswerRole role, bool need_ref,
                        std::string_view what) {
  require(!batch.empty(), ErrorKind::EmptyBatch, std::string(what) + ": empty batch");
  for (const auto& s : batch) {
    require(s.role == role, ErrorKind::WrongRole, std::string(what) + ": unexpected answer role");
    require(!s.logprob_current.empty(), ErrorKind::EmptySequence,
            std::string(what) + ": sequence without tokens");
    if (need_ref) {
      require(!s.logprob_ref.empty(), ErrorKind::MissingReference,
              std::string(what) + ": reference log-probs missing");
    }
    require(s.logprob_ref.empty() || s.logprob_ref.size() == s.logprob_current.size(),
            ErrorKind::LengthMismatch, std::string(what) + ": current/reference lengths differ");
    for (double x : s.logprob_current)
      require(x <= 0.0, ErrorKind::InvalidArgument, std::string(what) + ": log-prob above 0");
    for (double x : s.logprob_ref)
      require(x <= 0.0, ErrorKind::InvalidArgument, std::string(what) + ": log-prob above 0");
  }
}

inline double seq_sum(const std::vector<double>& v) { return tree_sum(v); }

inline double batch_mean(const std::vector<double>& terms) {
  return tree_sum(terms) / static_cast<double>(terms.size());
}

/// Mean NLL of a batch with the given role (shared by IDK and GD).
inline SequenceLoss nll(std::span<const ScoredSequence> batch, AnswerRole role, std::string_view what) {
  check_batch(batch, role, false, what);
  const double n = static_cast<double>(batch.size());
  std::vector<double> terms;
  SequenceLoss out;
  for (const auto& s : batch) {
    terms.push_back(-seq_sum(s.logprob_current));
    out.d_seq.push_back(-1.0 / n);
  }
  out.value = batch_mean(terms);
  return out;
}

}  // namespace detail

/// Gradient ascent: E[log p(y|x)] on forget answers.
inline SequenceLoss ga(std::span<const ScoredSequence> batch) {
  detail::check_batch(batch, AnswerRole::forget_answer, false, "GA");
  const double n = static_cast<double>(batch.size());
  std::vector<double> terms;
  SequenceLoss out;
  for (const auto& s : batch) {
    terms.push_back(detail::seq_sum(s.logprob_current));
    out.d_seq.push_back(1.0 / n);
  }
  out.value = detail::batch_mean(terms);
  return out;
}

/// -(2/beta) E[log sigmoid(-beta * r)], r = log p_theta(y|x) - log p_ref(y|x).
/// The per-sequence weight 2*sigmoid(beta*r) tends to 1 (plain GA) as beta -> 0.
inline SequenceLoss npo(std::span<const ScoredSequence> batch, double beta) {
  require(beta > 0.0, ErrorKind::InvalidArgument, "NPO: beta must be positive");
  detail::check_batch(batch, AnswerRole::forget_answer, true, "NPO");
  const double n = static_cast<double>(batch.size());
  std::vector<double> terms;
  SequenceLoss out;
  for (const auto& s : batch) {
    const double r = detail::seq_sum(s.logprob_current) - detail::seq_sum(s.logprob_ref);
    terms.push_back(-(2.0 / beta) * log_sigmoid(-beta * r));
    out.d_seq.push_back(2.0 * sigmoid(beta * r) / n);
  }
  out.value = detail::batch_mean(terms);
  return out;
}

struct PairedLoss {
  double value = 0.0;
  std::vector<double> d_neg;
  std::vector<double> d_pos;
};

/// Standard DPO with forget answers as rejected and refusal answers as chosen:
/// -E[log sigmoid(beta * (delta_pos - delta_neg))], delta = log p_theta - log p_ref.
inline PairedLoss dpo(std::span<const ScoredSequence> neg, std::span<const ScoredSequence> pos,
                      double beta) {
  require(beta > 0.0, ErrorKind::InvalidArgument, "DPO: beta must be positive");
  require(neg.size() == pos.size(), ErrorKind::LengthMismatch,
          "DPO: negative and positive batches must align per prompt");
  detail::check_batch(neg, AnswerRole::forget_answer, true, "DPO negatives");
  detail::check_batch(pos, AnswerRole::idk_answer, true, "DPO positives");
  const double n = static_cast<double>(neg.size());
  std::vector<double> terms;
  PairedLoss out;
  for (std::size_t i = 0; i < neg.size(); ++i) {
    const double dn = detail::seq_sum(neg[i].logprob_current) - detail::seq_sum(neg[i].logprob_ref);
    const double dp = detail::seq_sum(pos[i].logprob_current) - detail::seq_sum(pos[i].logprob_ref);
    const double margin = beta * (dp - dn);
    terms.push_back(-log_sigmoid(margin));
    const double w = beta * sigmoid(-margin) / n;
    out.d_pos.push_back(-w);
    out.d_neg.push_back(w);
  }
  out.value = detail::batch_mean(terms);
  return out;
}

/// E[-log p(y_idk|x)] toward refusal targets.
inline SequenceLoss idk(std::span<const ScoredSequence> batch) {
  return detail::nll(batch, AnswerRole::idk_answer, "IDK");
}

/// E[-log p(y|x)] on retain examples.
inline SequenceLoss gd(std::span<const ScoredSequence> batch) {
  return detail::nll(batch, AnswerRole::retain_answer, "GD");
}

inline double ga_loss(std::span<const ScoredSequence> b) { return ga(b).value; }
inline double npo_loss(std::span<const ScoredSequence> b, double beta) { return npo(b, beta).value; }
inline double dpo_loss(std::span<const ScoredSequence> neg, std::span<const ScoredSequence> pos,
                       double beta) {
  return dpo(neg, pos, beta).value;
}
inline double idk_loss(std::span<const ScoredSequence> b) { return idk(b).value; }
inline double gd_reg(std::span<const ScoredSequence> b) { return gd(b).value; }

using Distribution = std::vector<double>;

struct KlLoss {
  double value = 0.0;
  /// d value / d logits of the current distribution, per position
  /// (current = softmax(logits)).
  std::vector<std::vector<double>> d_logits;
};

/// Mean over positions of KL(current || ref).
inline KlLoss kl(std::span<const Distribution> current, std::span<const Distribution> ref) {
  require(!current.empty(), ErrorKind::EmptyBatch, "KL: no positions");
  require(current.size() == ref.size(), ErrorKind::LengthMismatch, "KL: position counts differ");
  const double n = static_cast<double>(current.size());
  std::vector<double> terms;
  KlLoss out;
  for (std::size_t i = 0; i < current.size(); ++i) {
    const auto& p = current[i];
    const auto& q = ref[i];
    require(p.size() == q.size() && !p.empty(), ErrorKind::DimensionMismatch,
            "KL: distribution sizes differ");
    require(std::abs(tree_sum(p) - 1.0) <= 1e-9 && std::abs(tree_sum(q) - 1.0) <= 1e-9,
            ErrorKind::NotNormalized, "KL: distribution does not sum to 1");
    std::vector<double> parts;
    parts.reserve(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
      require(p[j] >= 0.0 && q[j] >= 0.0, ErrorKind::NotNormalized, "KL: negative probability");
      if (p[j] == 0.0) {
        parts.push_back(0.0);
        continue;
      }
      require(q[j] > 0.0, ErrorKind::SupportViolation, "KL: reference has no mass where current does");
      parts.push_back(p[j] * (std::log(p[j]) - std::log(q[j])));
    }
    const double k = tree_sum(parts);
    terms.push_back(k);
    std::vector<double> g(p.size(), 0.0);
    for (std::size_t j = 0; j < p.size(); ++j)
      if (p[j] > 0.0) g[j] = p[j] * (std::log(p[j]) - std::log(q[j]) - k) / n;
    out.d_logits.push_back(std::move(g));
  }
  out.value = std::max(0.0, detail::batch_mean(terms));
  return out;
}

inline double kl_reg(std::span<const Distribution> current, std::span<const Distribution> ref) {
  return kl(current, ref).value;
}

struct ForgetBatch {
  std::vector<ScoredSequence> forget;  // true answers on forget prompts
  std::vector<ScoredSequence> idk;     // refusal answers on the same prompts (IDK, DPO)
};

struct RetainBatch {
  std::vector<ScoredSequence> sequences;  // GD
  std::vector<Distribution> dist_current;  // KL
  std::vector<Distribution> dist_ref;
};

struct CombinedLoss {
  double value = 0.0;
  double method_value = 0.0;
  double reg_value = 0.0;
  std::vector<double> d_forget;                   // per forget sequence
  std::vector<double> d_idk;                      // per idk sequence
  std::vector<double> d_retain;                   // per retain sequence (GD)
  std::vector<std::vector<double>> d_retain_logits;  // per retain position (KL)
};

/// method loss + reg_weight * regularizer, with all partial derivatives.
inline CombinedLoss combined(const LossSpec& spec, const ForgetBatch& f, const RetainBatch& r) {
  spec.validate();
  CombinedLoss out;
  switch (spec.method) {
    case Method::GA: {
      auto l = ga(f.forget);
      out.method_value = l.value;
      out.d_forget = std::move(l.d_seq);
      break;
    }
    case Method::NPO: {
      auto l = npo(f.forget, *spec.beta);
      out.method_value = l.value;
      out.d_forget = std::move(l.d_seq);
      break;
    }
    case Method::DPO: {
      auto l = dpo(f.forget, f.idk, *spec.beta);
      out.method_value = l.value;
      out.d_forget = std::move(l.d_neg);
      out.d_idk = std::move(l.d_pos);
      break;
    }
    case Method::IDK: {
      auto l = idk(f.idk);
      out.method_value = l.value;
      out.d_idk = std::move(l.d_seq);
      break;
    }
  }
  switch (spec.regularizer) {
    case Regularizer::none: break;
    case Regularizer::GD: {
      auto l = gd(r.sequences);
      out.reg_value = l.value;
      out.d_retain = std::move(l.d_seq);
      for (auto& d : out.d_retain) d *= spec.reg_weight;
      break;
    }
    case Regularizer::KL: {
      auto l = kl(r.dist_current, r.dist_ref);
      out.reg_value = l.value;
      out.d_retain_logits = std::move(l.d_logits);
      for (auto& row : out.d_retain_logits)
        for (auto& d : row) d *= spec.reg_weight;
      break;
    }
  }
  out.value = out.method_value + spec.reg_weight * out.reg_value;
  return out;
}

inline double combined_objective(const LossSpec& spec, const ForgetBatch& f, const RetainBatch& r) {
  return combined(spec, f, r).value;
}

}  // namespace unlearn::losses
