// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON mappings for records and reports, JSONL streams, atomic file writes
// and CSV emission.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "unlearn/error.hpp"
#include "unlearn/metrics.hpp"
#include "unlearn/neighborset.hpp"
#include "unlearn/toylab.hpp"

namespace unlearn::io {

using json = nlohmann::json;

/// Rejects keys outside `allowed`, naming all of them at once.
inline void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed,
                                std::string_view where) {
  if (!j.is_object()) fail(ErrorKind::ConfigInvalid, std::string(where) + " must be an object");
  std::string bad;
  for (const auto& [k, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) bad += (bad.empty() ? "" : ", ") + k;
  }
  if (!bad.empty()) fail(ErrorKind::ConfigInvalid, std::string(where) + ": unknown keys: " + bad);
}

// ---------------------------------------------------------------------------
// Files

/// Writes via a sibling temp file and rename, so readers never see a torn file.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
std::vector<T> parse_jsonl(std::string_view text, std::string_view source = "<input>") {
  std::vector<T> out;
  std::size_t lineno = 0, begin = 0;
  while (begin < text.size()) {
    auto end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    ++lineno;
    const auto line = text.substr(begin, end - begin);
    begin = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(json::parse(line).get<T>());
    } catch (const json::exception& e) {
      fail(ErrorKind::Io, std::string(source) + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.kind(), std::string(source) + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
std::string to_jsonl(std::span<const T> records) {
  std::string out;
  for (const auto& r : records) {
    out += json(r).dump();
    out += '\n';
  }
  return out;
}

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  return parse_jsonl<T>(read_file(path), path.string());
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, std::span<const T> records) {
  atomic_write(path, to_jsonl(records));
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

/// Shortest decimal that round-trips.
inline std::string fmt(double x) {
  return json(x).dump();
}

}  // namespace unlearn::io

// ---------------------------------------------------------------------------
// JSON mappings (found by ADL)

namespace unlearn {

inline void to_json(nlohmann::json& j, const QAPair& p) {
  j = {{"id", p.id},           {"entity", p.entity},
       {"question", p.question}, {"answer", p.answer},
       {"aliases", p.aliases},   {"set_kind", to_string(p.set_kind)}};
  if (p.cluster_id) j["cluster_id"] = *p.cluster_id;
  if (p.category) j["category"] = to_string(*p.category);
  if (p.paraphrase_of) j["paraphrase_of"] = *p.paraphrase_of;
}

inline void from_json(const nlohmann::json& j, QAPair& p) {
  io::reject_unknown_keys(j, {"id", "entity", "question", "answer", "aliases", "set_kind", "cluster_id", "category",
                              "paraphrase_of"},
                          "QAPair");
  p = QAPair{};
  j.at("id").get_to(p.id);
  j.at("entity").get_to(p.entity);
  j.at("question").get_to(p.question);
  j.at("answer").get_to(p.answer);
  if (j.contains("aliases")) j.at("aliases").get_to(p.aliases);
  p.set_kind = parse_set_kind(j.at("set_kind").get<std::string>());
  if (j.contains("cluster_id")) p.cluster_id = j.at("cluster_id").get<int>();
  if (j.contains("category")) p.category = parse_category(j.at("category").get<std::string>());
  if (j.contains("paraphrase_of")) p.paraphrase_of = j.at("paraphrase_of").get<std::string>();
}

inline void to_json(nlohmann::json& j, const SyntacticCluster& c) {
  std::vector<nlohmann::json> spans;
  for (const auto& [b, e] : c.templ.mask_spans) spans.push_back({b, e});
  j = {{"cluster_id", c.cluster_id},
       {"member_ids", c.member_ids},
       {"template", c.templ.masked},
       {"template_source", c.templ.original},
       {"mask_spans", spans},
       {"entity_slot", c.entity_slot},
       {"min_intra_similarity", c.min_intra_similarity}};
}

inline void from_json(const nlohmann::json& j, SyntacticCluster& c) {
  io::reject_unknown_keys(j, {"cluster_id", "member_ids", "template", "template_source", "mask_spans", "entity_slot",
                              "min_intra_similarity"},
                          "SyntacticCluster");
  c = SyntacticCluster{};
  j.at("cluster_id").get_to(c.cluster_id);
  j.at("member_ids").get_to(c.member_ids);
  std::vector<textsim::Span> spans;
  for (const auto& s : j.at("mask_spans")) spans.emplace_back(s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>());
  c.templ = textsim::MaskedSentence::from_spans(j.at("template_source").get<std::string>(), spans);
  require(c.templ.masked == j.at("template").get<std::string>(), ErrorKind::InvalidArgument,
          "cluster template does not match its spans");
  j.at("entity_slot").get_to(c.entity_slot);
  j.at("min_intra_similarity").get_to(c.min_intra_similarity);
}

inline void to_json(nlohmann::json& j, const DistinctnessReport& r) {
  j = {{"ok", r.ok()}, {"checked_pairs", r.checked_pairs}, {"entity_overlaps", r.entity_overlaps}};
  auto& v = j["violations"] = nlohmann::json::array();
  for (const auto& x : r.violations)
    v.push_back({{"neighbor_id", x.neighbor_id}, {"forget_id", x.forget_id}, {"similarity", x.similarity}});
}

}  // namespace unlearn

namespace unlearn::metrics {

inline void to_json(nlohmann::json& j, const EvalRecord& r) {
  j = {{"id", r.id}, {"model_tag", r.model_tag}, {"generation", r.generation}, {"token_probs", r.token_probs}};
  if (r.embedding) j["embedding"] = *r.embedding;
  if (r.nli_label) j["nli_label"] = to_string(*r.nli_label);
}

inline void from_json(const nlohmann::json& j, EvalRecord& r) {
  io::reject_unknown_keys(j, {"id", "model_tag", "generation", "token_probs", "embedding", "nli_label"},
                          "EvalRecord");
  r = EvalRecord{};
  j.at("id").get_to(r.id);
  j.at("model_tag").get_to(r.model_tag);
  j.at("generation").get_to(r.generation);
  j.at("token_probs").get_to(r.token_probs);
  if (j.contains("embedding")) r.embedding = j.at("embedding").get<std::vector<double>>();
  if (j.contains("nli_label")) r.nli_label = parse_nli_label(j.at("nli_label").get<std::string>());
}

inline void to_json(nlohmann::json& j, const MetricVector& m) {
  j = {{"rouge_l_recall", m.rouge_l_recall},
       {"probability", m.probability},
       {"cosine_sim", m.cosine_sim},
       {"entailment", m.entailment}};
}

inline void from_json(const nlohmann::json& j, MetricVector& m) {
  j.at("rouge_l_recall").get_to(m.rouge_l_recall);
  j.at("probability").get_to(m.probability);
  j.at("cosine_sim").get_to(m.cosine_sim);
  j.at("entailment").get_to(m.entailment);
}

inline void to_json(nlohmann::json& j, const UtilityReport& r) {
  j = {{"model_tag", r.model_tag}};
  j["model_utility"] = r.model_utility ? nlohmann::json(*r.model_utility) : nlohmann::json(nullptr);
  j["forget_efficacy"] = r.forget_efficacy ? nlohmann::json(*r.forget_efficacy) : nlohmann::json(nullptr);
  auto& sets = j["per_set"] = nlohmann::json::object();
  for (const auto& [k, s] : r.per_set)
    sets[std::string(to_string(k))] = {{"mean", s.mean}, {"utility", s.utility}, {"count", s.count}};
  auto& cats = j["per_category"] = nlohmann::json::object();
  for (const auto& [c, u] : r.per_category) cats[std::string(to_string(c))] = u;
  auto& rud = j["rud"] = nlohmann::json::object();
  for (const auto& [k, v] : r.rud) rud[std::string(to_string(k))] = v;
}

inline void from_json(const nlohmann::json& j, UtilityReport& r) {
  r = UtilityReport{};
  j.at("model_tag").get_to(r.model_tag);
  if (!j.at("model_utility").is_null()) r.model_utility = j["model_utility"].get<double>();
  if (!j.at("forget_efficacy").is_null()) r.forget_efficacy = j["forget_efficacy"].get<double>();
  for (const auto& [k, v] : j.at("per_set").items())
    r.per_set[parse_set_kind(k)] = {v.at("mean").get<MetricVector>(), v.at("utility").get<double>(),
                                    v.at("count").get<std::size_t>()};
  for (const auto& [k, v] : j.at("per_category").items()) r.per_category[parse_category(k)] = v.get<double>();
  for (const auto& [k, v] : j.at("rud").items()) r.rud[parse_set_kind(k)] = v.get<double>();
}

}  // namespace unlearn::metrics

namespace unlearn::toylab {

inline void to_json(nlohmann::json& j, const TraceStep& s) {
  j = {{"step", s.step},
       {"loss", s.loss},
       {"forget_efficacy", s.forget_efficacy},
       {"lr", s.lr},
       {"utility", s.utility},
       {"grad_norm", s.grad_norm}};
}

inline void from_json(const nlohmann::json& j, TraceStep& s) {
  j.at("step").get_to(s.step);
  j.at("loss").get_to(s.loss);
  j.at("forget_efficacy").get_to(s.forget_efficacy);
  j.at("lr").get_to(s.lr);
  j.at("utility").get_to(s.utility);
  j.at("grad_norm").get_to(s.grad_norm);
}

/// One row per regularizer, train set and test set.
inline std::string sweep_csv(const SweepResult& r) {
  std::string out = "regularizer,train,test,rud\n";
  for (const auto& c : r.cells)
    out += std::string(losses::to_string(c.reg)) + "," + std::string(to_string(c.train)) + "," +
           std::string(to_string(c.test)) + "," + io::fmt(c.rud) + "\n";
  return out;
}

inline std::string trace_csv(const RunTrace& t) {
  std::string out = "step,loss,forget_efficacy";
  if (t.steps.empty()) return out + "\n";
  const auto& first = t.steps.front();
  for (const auto& [k, _] : first.utility) out += ",mu_" + k;
  for (const auto& [k, _] : first.grad_norm) out += ",grad_norm_" + k;
  out += "\n";
  for (const auto& s : t.steps) {
    out += std::to_string(s.step) + "," + io::fmt(s.loss) + "," + io::fmt(s.forget_efficacy);
    for (const auto& [_, v] : s.utility) out += "," + io::fmt(v);
    for (const auto& [_, v] : s.grad_norm) out += "," + io::fmt(v);
    out += "\n";
  }
  return out;
}

}  // namespace unlearn::toylab
