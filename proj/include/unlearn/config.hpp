// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration: a single JSON file, validated in full before any command
// runs. Unknown keys are errors.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "unlearn/clients.hpp"
#include "unlearn/error.hpp"
#include "unlearn/io.hpp"
#include "unlearn/losses.hpp"
#include "unlearn/neighborset.hpp"
#include "unlearn/toylab.hpp"

namespace unlearn::config {

using json = nlohmann::json;

struct MethodHyper {
  double lr = 0.0;
  int epochs = 0;
  friend bool operator==(const MethodHyper&, const MethodHyper&) = default;
};

enum class Scenario { real_world, tofu };

/// Learning rate and epochs reported for the full-scale experiments.
inline std::map<losses::Method, MethodHyper> full_scale_hyperparameters(Scenario s) {
  using losses::Method;
  if (s == Scenario::tofu)
    return {{Method::GA, {2e-5, 4}}, {Method::NPO, {4e-5, 5}}, {Method::IDK, {2e-5, 2}}, {Method::DPO, {4e-5, 2}}};
  return {{Method::GA, {5e-6, 3}}, {Method::NPO, {3e-5, 3}}, {Method::IDK, {3e-6, 2}}, {Method::DPO, {8e-6, 4}}};
}

inline std::vector<std::string> default_idk_templates() {
  return {"I don't know.", "I'm not sure about that.", "I have no information on that.",
          "That is not something I can answer.", "I can't recall that."};
}

struct ToyConfig {
  toylab::CorpusSizes sizes;
  double fit_lr = 0.5;
  double fit_target = 0.98;
  int fit_max_epochs = 500;
  int max_steps = 2000;
  double fe_lo = 0.65;
  double fe_hi = 0.75;
  unsigned workers = 1;
  std::map<losses::Method, toylab::MethodDefaults> hyper;  // empty -> toy defaults
};

struct Paths {
  std::filesystem::path fixtures = "fixtures";
  std::filesystem::path output = "out";
};

struct RunConfig {
  std::uint64_t seed = 0;
  Thresholds thresholds;
  losses::LossSpec loss;
  Scenario scenario = Scenario::real_world;
  std::map<losses::Method, MethodHyper> hyper = full_scale_hyperparameters(Scenario::real_world);
  std::vector<std::string> idk_templates = default_idk_templates();
  std::vector<clients::PortDescriptor> ports;
  Paths paths;
  ToyConfig toy;

  void validate() const {
    thresholds.validate();
    loss.validate();
    for (const auto& [m, h] : hyper) {
      require(h.lr > 0.0, ErrorKind::ConfigInvalid, "lr for " + std::string(losses::to_string(m)) + " must be > 0");
      require(h.epochs >= 1, ErrorKind::ConfigInvalid,
              "epochs for " + std::string(losses::to_string(m)) + " must be >= 1");
    }
    require(!idk_templates.empty(), ErrorKind::ConfigInvalid, "idk_templates must not be empty");
    for (const auto& p : ports) p.validate();
    require(toy.fe_lo < toy.fe_hi && toy.fe_lo >= 0.0 && toy.fe_hi <= 1.0, ErrorKind::ConfigInvalid,
            "toy FE band must satisfy 0 <= lo < hi <= 1");
    require(toy.fit_target > 0.0 && toy.fit_target < 1.0, ErrorKind::ConfigInvalid, "fit_target must be in (0, 1)");
    require(toy.max_steps >= 0 && toy.fit_max_epochs >= 1 && toy.workers >= 1, ErrorKind::ConfigInvalid,
            "toy step, epoch and worker counts must be non-negative");
    for (const auto& [m, h] : toy.hyper) require(h.lr > 0.0, ErrorKind::ConfigInvalid, "toy lr must be > 0");
  }

  const clients::PortDescriptor* port(clients::PortKind k) const {
    for (const auto& p : ports)
      if (p.kind == k) return &p;
    return nullptr;
  }
};

namespace detail {

/// Collects every unknown key in the whole document before failing.
class KeyChecker {
 public:
  void check(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) {
      errors_.push_back(where + " must be an object");
      return;
    }
    for (const auto& [k, _] : j.items())
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
        errors_.push_back(where.empty() ? k : where + "." + k);
  }
  void finish() const {
    if (errors_.empty()) return;
    std::string msg = "invalid config; unknown or malformed keys: ";
    for (std::size_t i = 0; i < errors_.size(); ++i) msg += (i ? ", " : "") + errors_[i];
    fail(ErrorKind::ConfigInvalid, msg);
  }

 private:
  std::vector<std::string> errors_;
};

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  detail::KeyChecker keys;
  keys.check(j, {"seed", "thresholds", "loss", "scenario", "hyperparameters", "idk_templates", "ports", "paths", "toy"},
             "");
  if (j.contains("thresholds")) keys.check(j["thresholds"], {"theta_high", "theta_low", "min_cluster_size"}, "thresholds");
  if (j.contains("loss")) keys.check(j["loss"], {"method", "regularizer", "beta", "reg_weight"}, "loss");
  if (j.contains("hyperparameters")) {
    keys.check(j["hyperparameters"], {"GA", "NPO", "IDK", "DPO"}, "hyperparameters");
    for (const auto& [m, v] : j["hyperparameters"].items()) keys.check(v, {"lr", "epochs"}, "hyperparameters." + m);
  }
  if (j.contains("ports")) {
    std::size_t i = 0;
    for (const auto& p : j["ports"]) {
      const auto where = "ports[" + std::to_string(i++) + "]";
      keys.check(p, {"kind", "endpoint", "capabilities"}, where);
      if (p.is_object() && p.contains("capabilities"))
        keys.check(p["capabilities"], {"max_concurrency", "deterministic"}, where + ".capabilities");
    }
  }
  if (j.contains("paths")) keys.check(j["paths"], {"fixtures", "output"}, "paths");
  if (j.contains("toy")) {
    const auto& t = j["toy"];
    keys.check(t, {"sizes", "fit_lr", "fit_target", "fit_max_epochs", "max_steps", "fe_band", "workers", "methods"},
               "toy");
    if (t.is_object() && t.contains("sizes"))
      keys.check(t["sizes"],
                 {"templates", "entities", "answer_vocab", "forget_templates", "forget_entities", "domain_entities",
                  "entity_neighbor_entities", "syn_similar_entities", "syn_different_entities"},
                 "toy.sizes");
    if (t.is_object() && t.contains("methods")) {
      keys.check(t["methods"], {"GA", "NPO", "IDK", "DPO"}, "toy.methods");
      for (const auto& [m, v] : t["methods"].items()) keys.check(v, {"lr", "beta"}, "toy.methods." + m);
    }
  }
  keys.finish();

  RunConfig c;
  try {
    detail::get_if(j, "seed", c.seed);
    if (j.contains("thresholds")) {
      const auto& t = j["thresholds"];
      detail::get_if(t, "theta_high", c.thresholds.theta_high);
      detail::get_if(t, "theta_low", c.thresholds.theta_low);
      detail::get_if(t, "min_cluster_size", c.thresholds.min_cluster_size);
    }
    if (j.contains("scenario")) {
      const auto s = j["scenario"].get<std::string>();
      require(s == "real_world" || s == "tofu", ErrorKind::ConfigInvalid, "scenario must be real_world or tofu");
      c.scenario = s == "tofu" ? Scenario::tofu : Scenario::real_world;
      c.hyper = full_scale_hyperparameters(c.scenario);
    }
    if (j.contains("loss")) {
      const auto& l = j["loss"];
      if (l.contains("method")) c.loss.method = losses::parse_method(l["method"].get<std::string>());
      if (l.contains("regularizer")) c.loss.regularizer = losses::parse_regularizer(l["regularizer"].get<std::string>());
      if (l.contains("beta") && !l["beta"].is_null()) c.loss.beta = l["beta"].get<double>();
      detail::get_if(l, "reg_weight", c.loss.reg_weight);
    }
    if (c.loss.needs_beta() && !c.loss.beta) c.loss.beta = 0.1;
    if (j.contains("hyperparameters"))
      for (const auto& [m, v] : j["hyperparameters"].items()) {
        auto& h = c.hyper[losses::parse_method(m)];
        detail::get_if(v, "lr", h.lr);
        detail::get_if(v, "epochs", h.epochs);
      }
    detail::get_if(j, "idk_templates", c.idk_templates);
    if (j.contains("ports"))
      for (const auto& p : j["ports"]) {
        clients::PortDescriptor d;
        d.kind = clients::parse_port_kind(p.at("kind").get<std::string>());
        p.at("endpoint").get_to(d.endpoint);
        if (p.contains("capabilities")) {
          detail::get_if(p["capabilities"], "max_concurrency", d.capabilities.max_concurrency);
          detail::get_if(p["capabilities"], "deterministic", d.capabilities.deterministic);
        }
        c.ports.push_back(std::move(d));
      }
    if (j.contains("paths")) {
      if (j["paths"].contains("fixtures")) c.paths.fixtures = j["paths"]["fixtures"].get<std::string>();
      if (j["paths"].contains("output")) c.paths.output = j["paths"]["output"].get<std::string>();
    }
    if (j.contains("toy")) {
      const auto& t = j["toy"];
      if (t.contains("sizes")) {
        const auto& s = t["sizes"];
        auto& z = c.toy.sizes;
        detail::get_if(s, "templates", z.templates);
        detail::get_if(s, "entities", z.entities);
        detail::get_if(s, "answer_vocab", z.answer_vocab);
        detail::get_if(s, "forget_templates", z.forget_templates);
        detail::get_if(s, "forget_entities", z.forget_entities);
        detail::get_if(s, "domain_entities", z.domain_entities);
        detail::get_if(s, "entity_neighbor_entities", z.entity_neighbor_entities);
        detail::get_if(s, "syn_similar_entities", z.syn_similar_entities);
        detail::get_if(s, "syn_different_entities", z.syn_different_entities);
      }
      detail::get_if(t, "fit_lr", c.toy.fit_lr);
      detail::get_if(t, "fit_target", c.toy.fit_target);
      detail::get_if(t, "fit_max_epochs", c.toy.fit_max_epochs);
      detail::get_if(t, "max_steps", c.toy.max_steps);
      detail::get_if(t, "workers", c.toy.workers);
      if (t.contains("fe_band")) {
        const auto band = t["fe_band"].get<std::array<double, 2>>();
        c.toy.fe_lo = band[0];
        c.toy.fe_hi = band[1];
      }
      if (t.contains("methods"))
        for (const auto& [m, v] : t["methods"].items()) {
          const auto method = losses::parse_method(m);
          auto h = toylab::toy_defaults(method);
          detail::get_if(v, "lr", h.lr);
          if (v.contains("beta")) h.beta = v["beta"].get<double>();
          c.toy.hyper[method] = h;
        }
    }
    c.validate();
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigInvalid, std::string("invalid config value: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::ConfigInvalid, e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigInvalid, path.string() + ": " + e.what());
  }
  return parse_config(j);
}

inline json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["thresholds"] = {{"theta_high", c.thresholds.theta_high},
                     {"theta_low", c.thresholds.theta_low},
                     {"min_cluster_size", c.thresholds.min_cluster_size}};
  j["loss"] = {{"method", losses::to_string(c.loss.method)},
               {"regularizer", losses::to_string(c.loss.regularizer)},
               {"beta", c.loss.beta ? json(*c.loss.beta) : json(nullptr)},
               {"reg_weight", c.loss.reg_weight}};
  j["scenario"] = c.scenario == Scenario::tofu ? "tofu" : "real_world";
  for (const auto& [m, h] : c.hyper) j["hyperparameters"][std::string(losses::to_string(m))] = {{"lr", h.lr}, {"epochs", h.epochs}};
  j["idk_templates"] = c.idk_templates;
  j["ports"] = json::array();
  for (const auto& p : c.ports)
    j["ports"].push_back({{"kind", clients::to_string(p.kind)},
                          {"endpoint", p.endpoint},
                          {"capabilities",
                           {{"max_concurrency", p.capabilities.max_concurrency},
                            {"deterministic", p.capabilities.deterministic}}}});
  j["paths"] = {{"fixtures", c.paths.fixtures.string()}, {"output", c.paths.output.string()}};
  const auto& z = c.toy.sizes;
  j["toy"] = {{"sizes",
               {{"templates", z.templates},
                {"entities", z.entities},
                {"answer_vocab", z.answer_vocab},
                {"forget_templates", z.forget_templates},
                {"forget_entities", z.forget_entities},
                {"domain_entities", z.domain_entities},
                {"entity_neighbor_entities", z.entity_neighbor_entities},
                {"syn_similar_entities", z.syn_similar_entities},
                {"syn_different_entities", z.syn_different_entities}}},
              {"fit_lr", c.toy.fit_lr},
              {"fit_target", c.toy.fit_target},
              {"fit_max_epochs", c.toy.fit_max_epochs},
              {"max_steps", c.toy.max_steps},
              {"fe_band", {c.toy.fe_lo, c.toy.fe_hi}},
              {"workers", c.toy.workers}};
  for (auto m : {losses::Method::GA, losses::Method::NPO, losses::Method::IDK, losses::Method::DPO}) {
    const auto it = c.toy.hyper.find(m);
    const auto h = it == c.toy.hyper.end() ? toylab::toy_defaults(m) : it->second;
    json v = {{"lr", h.lr}};
    if (h.beta) v["beta"] = *h.beta;
    j["toy"]["methods"][std::string(losses::to_string(m))] = v;
  }
  return j;
}

}  // namespace unlearn::config
