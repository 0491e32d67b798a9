// SPDX-License-Identifier: Apache-2.0
//
// unlearn-lab: command-line front end for the library.
// Exit codes: 0 success, 1 domain error, 2 usage or configuration error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "unlearn/http_transport.hpp"
#include "unlearn/unlearn.hpp"

namespace fs = std::filesystem;
using namespace unlearn;
using json = nlohmann::json;

namespace {

struct Context {
  fs::path workdir = ".";
  std::string config_path;
  std::optional<std::uint64_t> seed;
  config::RunConfig cfg;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : workdir / p; }

  void load() {
    if (!config_path.empty()) cfg = config::load_config(resolve(config_path));
    if (seed) cfg.seed = *seed;
  }
};

/// Owns the transports behind every configured port.
class PortSet {
 public:
  explicit PortSet(const Context& ctx) : ctx_(ctx) {}

  clients::Transport& transport(clients::PortKind kind) {
    if (auto it = transports_.find(kind); it != transports_.end()) return *it->second;
    const auto* d = ctx_.cfg.port(kind);
    std::unique_ptr<clients::Transport> t;
    if (d != nullptr && d->is_remote()) {
      t = std::make_unique<clients::HttpTransport>(d->endpoint);
    } else {
      const fs::path configured = d != nullptr ? fs::path(d->endpoint) : ctx_.cfg.paths.fixtures;
      const auto dir = ctx_.resolve(clients::fixture_directory(configured));
      t = std::make_unique<clients::ReplayTransport>(clients::FixtureStore::load(dir), true);
    }
    return *(transports_[kind] = std::move(t));
  }

  int concurrency(clients::PortKind kind) const {
    const auto* d = ctx_.cfg.port(kind);
    return d != nullptr ? d->capabilities.max_concurrency : 1;
  }

 private:
  const Context& ctx_;
  std::map<clients::PortKind, std::unique_ptr<clients::Transport>> transports_;
};

void write_json(const fs::path& path, const json& j) { io::atomic_write(path, j.dump(2) + "\n"); }

std::vector<std::string> entities_of(std::span<const QAPair> records) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.entity).second) out.push_back(r.entity);
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> out;
  std::istringstream in(io::read_file(path));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

json run_json(const toylab::UnlearnResult& r) {
  const auto& last = r.trace.steps.back();
  return {{"band_reached", r.band_reached}, {"steps", last.step}, {"forget_efficacy", last.forget_efficacy}};
}

std::string grad_norm_svg(const toylab::RunTrace& trace, std::string_view title) {
  std::map<std::string, svg::Series> by_name;
  for (const auto& s : trace.steps)
    for (const auto& [name, v] : s.grad_norm) {
      auto& series = by_name[name];
      series.name = name;
      series.x.push_back(s.step);
      series.y.push_back(v);
    }
  std::vector<svg::Series> series;
  for (auto& [_, s] : by_name) series.push_back(std::move(s));
  require(!series.empty(), ErrorKind::InvalidArgument, "trace has no gradient-norm probes");
  return svg::line_chart(series, title, "unlearning step", "Frobenius norm of NLL gradient");
}

struct ToyState {
  toylab::ToyCorpus corpus;
  toylab::ToyModel fitted;
  int fit_epochs = 0;
};

ToyState prepare_toy(const config::RunConfig& cfg) {
  ToyState st;
  st.corpus = toylab::build_toy_corpus(cfg.seed, cfg.toy.sizes);
  toylab::FitOptions fo;
  fo.lr = cfg.toy.fit_lr;
  fo.target_mean_prob = cfg.toy.fit_target;
  fo.max_epochs = cfg.toy.fit_max_epochs;
  fo.seed = cfg.seed;
  auto fit = toylab::fit_initial(st.corpus.blank_model(), st.corpus.training, fo);
  st.fitted = std::move(fit.model);
  st.fit_epochs = fit.epochs;
  return st;
}

toylab::MethodDefaults toy_hyper(const config::RunConfig& cfg, losses::Method m) {
  const auto it = cfg.toy.hyper.find(m);
  return it == cfg.toy.hyper.end() ? toylab::toy_defaults(m) : it->second;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unlearn-lab: neighbor-set construction, evaluation and toy unlearning experiments"};
  app.require_subcommand(1);
  Context ctx;
  std::string workdir = ".";
  app.add_option("--workdir", workdir, "Directory all relative paths are resolved against");
  app.add_option("--config", ctx.config_path, "JSON run configuration");
  app.add_option("--seed", ctx.seed, "Overrides the configured seed");

  std::function<void()> action;

  // mask
  auto* mask = app.add_subcommand("mask", "Replace named entities, dates and numbers with {X}");
  std::string mask_text;
  std::vector<std::string> mask_entities;
  bool mask_llm = false, mask_json = false;
  mask->add_option("--text", mask_text, "Sentence to mask")->required();
  mask->add_option("--entity", mask_entities, "Known entity name (repeatable)");
  mask->add_flag("--llm", mask_llm, "Use the entity_masker port, falling back to rules");
  mask->add_flag("--json", mask_json, "Print spans as JSON");
  mask->callback([&] {
    action = [&] {
      const textsim::RuleBasedMasker rules(mask_entities);
      textsim::MaskedSentence m;
      if (mask_llm) {
        PortSet ports(ctx);
        clients::RemoteTextGenerator gen(ports.transport(clients::PortKind::entity_masker));
        clients::LlmEntityMasker llm(gen);
        m = textsim::mask_entities(mask_text, llm, rules);
      } else {
        m = textsim::mask_entities(mask_text, rules);
      }
      if (mask_json) {
        json spans = json::array();
        for (const auto& [b, e] : m.mask_spans) spans.push_back({b, e});
        std::cout << json{{"original", m.original}, {"masked", m.masked}, {"mask_spans", spans}}.dump() << "\n";
      } else {
        std::cout << m.masked << "\n";
      }
    };
  });

  // sim
  auto* sim = app.add_subcommand("sim", "Normalized Levenshtein similarity of two (masked) questions");
  std::string sim_a, sim_b;
  std::vector<std::string> sim_entities;
  sim->add_option("--a", sim_a, "First question")->required();
  sim->add_option("--b", sim_b, "Second question")->required();
  sim->add_option("--entity", sim_entities, "Mask these entities (and rule-detected ones) first");
  sim->callback([&] {
    action = [&] {
      double v;
      if (sim_entities.empty()) {
        v = textsim::levenshtein_similarity(sim_a, sim_b).value;
      } else {
        const textsim::RuleBasedMasker rules(sim_entities);
        v = textsim::levenshtein_similarity(textsim::mask_entities(sim_a, rules), textsim::mask_entities(sim_b, rules))
                .value;
      }
      std::cout << io::fmt(v) << "\n";
    };
  });

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Cluster forget questions into syntactic templates");
  std::string cl_forget, cl_out;
  unsigned cl_workers = 1;
  cluster->add_option("--forget", cl_forget, "QAPair JSONL; records of kind forget are used")->required();
  cluster->add_option("--out", cl_out, "Cluster JSONL output")->required();
  cluster->add_option("--workers", cl_workers, "Threads for the similarity matrix");
  cluster->callback([&] {
    action = [&] {
      const auto all = io::read_jsonl<QAPair>(ctx.resolve(cl_forget));
      validate_dataset(all);
      const auto forget = filter_by_kind(all, SetKind::forget);
      const textsim::RuleBasedMasker masker(entities_of(all));
      const auto clusters = cluster_forget_questions(forget, ctx.cfg.thresholds, masker, cl_workers);
      io::write_jsonl<SyntacticCluster>(ctx.resolve(cl_out), clusters);
      std::cout << clusters.size() << " clusters from " << forget.size() << " forget questions\n";
    };
  });

  // build-synset
  auto* build = app.add_subcommand("build-synset", "Generate and probe syntactically similar neighbors");
  std::string bs_clusters, bs_dataset, bs_candidates, bs_out;
  std::optional<std::size_t> bs_per_cluster;
  build->add_option("--clusters", bs_clusters, "Cluster JSONL from `cluster`")->required();
  build->add_option("--dataset", bs_dataset, "QAPair JSONL with forget, domain and entity sets")->required();
  build->add_option("--candidates", bs_candidates, "Candidate entity names, one per line")->required();
  build->add_option("--per-cluster", bs_per_cluster, "Pairs to generate per cluster (default: cluster size)");
  build->add_option("--out", bs_out, "Syn-similar QAPair JSONL output")->required();
  build->callback([&] {
    action = [&] {
      const auto dataset = io::read_jsonl<QAPair>(ctx.resolve(bs_dataset));
      validate_dataset(dataset);
      const auto clusters = io::read_jsonl<SyntacticCluster>(ctx.resolve(bs_clusters));
      std::vector<std::string> excluded;
      SynGenOptions opts;
      opts.thresholds = ctx.cfg.thresholds;
      opts.per_cluster = bs_per_cluster;
      for (const auto& r : dataset) {
        if (r.set_kind == SetKind::forget || r.set_kind == SetKind::domain_neighbor ||
            r.set_kind == SetKind::entity_neighbor)
          excluded.push_back(r.entity);
        if (r.set_kind == SetKind::domain_neighbor || r.set_kind == SetKind::entity_neighbor)
          opts.other_set_questions.push_back(r.question);
      }
      const auto candidates = select_candidate_entities(read_lines(ctx.resolve(bs_candidates)), excluded);
      auto known = entities_of(dataset);
      known.insert(known.end(), candidates.begin(), candidates.end());
      const textsim::RuleBasedMasker masker(known);

      PortSet ports(ctx);
      clients::RemoteTextGenerator qa_gen(ports.transport(clients::PortKind::qa_generator));
      clients::LlmQaGenerator filler(qa_gen);
      clients::RemoteTextGenerator probe_model(ports.transport(clients::PortKind::text_generator));
      const auto generated = generate_syn_similar_pairs(clusters, candidates, filler, masker, opts);
      const auto probed = probe_filter(generated, probe_model);
      io::write_jsonl<QAPair>(ctx.resolve(bs_out), probed.kept);
      std::cout << generated.size() << " generated, " << probed.kept.size() << " kept, " << probed.dropped.size()
                << " dropped by probing\n";
    };
  });

  // validate-sets
  auto* vs = app.add_subcommand("validate-sets", "Check neighbor sets are distinct from the forget set");
  std::string vs_dataset, vs_out;
  vs->add_option("--dataset", vs_dataset, "QAPair JSONL with every set")->required();
  vs->add_option("--out", vs_out, "Write the report as JSON");
  vs->callback([&] {
    action = [&] {
      const auto dataset = io::read_jsonl<QAPair>(ctx.resolve(vs_dataset));
      validate_dataset(dataset);
      std::vector<QAPair> forget, neighbors;
      for (const auto& r : dataset) {
        if (r.paraphrase_of) continue;
        (r.set_kind == SetKind::forget ? forget : neighbors).push_back(r);
      }
      const textsim::RuleBasedMasker masker(entities_of(dataset));
      const auto report = validate_distinctness(neighbors, forget, ctx.cfg.thresholds, masker);
      if (!vs_out.empty()) write_json(ctx.resolve(vs_out), report);
      std::cout << (report.ok() ? "ok" : "violations") << ": " << report.violations.size() << " similarity, "
                << report.entity_overlaps.size() << " entity overlaps, " << report.checked_pairs << " pairs checked\n";
      if (!report.ok()) fail(ErrorKind::InvalidArgument, "neighbor sets are not distinct from the forget set");
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score logged generations and build a utility report");
  std::string ev_dataset, ev_log, ev_reference, ev_tag = "model", ev_out, ev_baseline, ev_csv, ev_collect;
  bool ev_geometric = false;
  ev->add_option("--dataset", ev_dataset, "QAPair JSONL")->required();
  ev->add_option("--eval", ev_log, "Evaluation log JSONL of the model under test");
  ev->add_option("--collect", ev_collect, "Produce the evaluation log through the ports and write it here");
  ev->add_option("--reference", ev_reference, "Evaluation log of the reference model (cosine baseline)");
  ev->add_option("--tag", ev_tag, "Model tag for collected records and the report");
  ev->add_option("--baseline", ev_baseline, "Report of the model before unlearning; adds RUD");
  ev->add_option("--out", ev_out, "Report JSON output")->required();
  ev->add_option("--csv", ev_csv, "Per-set CSV output");
  ev->add_flag("--geometric", ev_geometric, "Geometric mean of token probabilities");
  ev->callback([&] {
    action = [&] {
      if (ev_log.empty() == ev_collect.empty())
        throw CLI::ValidationError("evaluate", "exactly one of --eval and --collect is required");
      const auto dataset = io::read_jsonl<QAPair>(ctx.resolve(ev_dataset));
      validate_dataset(dataset);
      PortSet ports(ctx);
      std::vector<metrics::EvalRecord> evaluated;
      if (!ev_collect.empty()) {
        clients::RemoteTextGenerator gen(ports.transport(clients::PortKind::text_generator));
        clients::RemoteTokenScorer scorer(ports.transport(clients::PortKind::token_scorer));
        evaluated = clients::collect_eval_records(dataset, gen, scorer, ev_tag, 64,
                                                  ports.concurrency(clients::PortKind::text_generator));
        io::write_jsonl<metrics::EvalRecord>(ctx.resolve(ev_collect), evaluated);
      } else {
        evaluated = io::read_jsonl<metrics::EvalRecord>(ctx.resolve(ev_log));
      }
      const auto reference =
          ev_reference.empty() ? evaluated : io::read_jsonl<metrics::EvalRecord>(ctx.resolve(ev_reference));

      std::unique_ptr<clients::RemoteEmbedder> embedder;
      std::unique_ptr<clients::RemoteNliJudge> judge;
      auto needs = [&](auto pred) {
        return std::any_of(evaluated.begin(), evaluated.end(), pred) ||
               std::any_of(reference.begin(), reference.end(), pred);
      };
      if (needs([](const metrics::EvalRecord& r) { return !r.embedding; }))
        embedder = std::make_unique<clients::RemoteEmbedder>(ports.transport(clients::PortKind::embedder));
      if (needs([](const metrics::EvalRecord& r) { return !r.nli_label; }))
        judge = std::make_unique<clients::RemoteNliJudge>(ports.transport(clients::PortKind::nli_judge));
      metrics::EvalPorts ep{embedder.get(), judge.get(),
                            ev_geometric ? metrics::ProbabilityMode::geometric : metrics::ProbabilityMode::arithmetic};

      const auto scored = metrics::score_examples(dataset, evaluated, reference, ep);
      auto report = metrics::build_report(scored, ev_tag);
      if (!ev_baseline.empty()) {
        const auto before = json::parse(io::read_file(ctx.resolve(ev_baseline))).get<metrics::UtilityReport>();
        metrics::attach_rud(report, before);
      }
      write_json(ctx.resolve(ev_out), report);
      if (!ev_csv.empty()) {
        std::string csv = "set_kind,count,rouge_l_recall,probability,cosine_sim,entailment,utility,rud\n";
        for (const auto& [k, s] : report.per_set) {
          const auto rud = report.rud.find(k);
          csv += std::string(to_string(k)) + "," + std::to_string(s.count) + "," + io::fmt(s.mean.rouge_l_recall) + "," +
                 io::fmt(s.mean.probability) + "," + io::fmt(s.mean.cosine_sim) + "," + io::fmt(s.mean.entailment) +
                 "," + io::fmt(s.utility) + "," + (rud == report.rud.end() ? "" : io::fmt(rud->second)) + "\n";
        }
        io::atomic_write(ctx.resolve(ev_csv), csv);
      }
      if (report.model_utility) std::printf("MU %.4f\n", *report.model_utility);
      if (report.forget_efficacy) std::printf("FE %.4f\n", *report.forget_efficacy);
      for (const auto& [k, v] : report.rud) std::printf("RUD %s %.2f\n", std::string(to_string(k)).c_str(), v);
    };
  });

  // rud
  auto* rud = app.add_subcommand("rud", "Relative utility drop in percent");
  double rud_before = 0.0, rud_after = 0.0;
  rud->add_option("--before", rud_before, "Utility before unlearning")->required();
  rud->add_option("--after", rud_after, "Utility after unlearning")->required();
  rud->callback([&] {
    action = [&] { std::printf("%.2f\n", metrics::relative_utility_drop(rud_before, rud_after)); };
  });

  // toy-run
  auto* toy = app.add_subcommand("toy-run", "Fit the toy model and unlearn its forget set once");
  std::string toy_method = "GA", toy_reg = "none", toy_retain = "domain", toy_out;
  std::optional<int> toy_steps;
  std::optional<double> toy_reg_weight;
  toy->add_option("--method", toy_method, "GA, NPO, DPO or IDK");
  toy->add_option("--reg", toy_reg, "none, GD or KL");
  toy->add_option("--retain-set", toy_retain, "Regularization set: domain, entity or syn_similar (train split)");
  toy->add_option("--max-steps", toy_steps, "Step budget");
  toy->add_option("--reg-weight", toy_reg_weight, "Regularizer weight");
  toy->add_option("--out", toy_out, "Output directory (default: configured output path)");
  toy->callback([&] {
    action = [&] {
      const auto method = losses::parse_method(toy_method);
      const auto reg = losses::parse_regularizer(toy_reg);
      const auto st = prepare_toy(ctx.cfg);
      const auto hp = toy_hyper(ctx.cfg, method);
      const losses::LossSpec spec{method, reg, hp.beta, toy_reg_weight.value_or(ctx.cfg.loss.reg_weight)};
      toylab::UnlearnOptions uo;
      uo.lr = hp.lr;
      uo.max_steps = toy_steps.value_or(ctx.cfg.toy.max_steps);
      uo.fe_lo = ctx.cfg.toy.fe_lo;
      uo.fe_hi = ctx.cfg.toy.fe_hi;
      const auto& retain = toylab::train_split(st.corpus, toylab::parse_retain_set(toy_retain));
      const auto res = toylab::run_unlearning(st.fitted, spec, st.corpus.forget,
                                              reg == losses::Regularizer::none ? std::span<const toylab::ToyFact>{}
                                                                               : std::span<const toylab::ToyFact>(retain),
                                              uo, toylab::default_tracking(st.corpus));
      const auto report = toylab::toy_report(st.corpus, st.fitted, res.model);

      const fs::path out = ctx.resolve(toy_out.empty() ? ctx.cfg.paths.output : fs::path(toy_out));
      io::write_jsonl<QAPair>(out / "corpus.jsonl", st.corpus.dataset);
      io::write_jsonl<toylab::TraceStep>(out / "trace.jsonl", res.trace.steps);
      io::atomic_write(out / "trace.csv", toylab::trace_csv(res.trace));
      io::atomic_write(out / "grad_norms.svg",
                       grad_norm_svg(res.trace, std::string(losses::to_string(method)) + " unlearning on the toy corpus"));
      json summary = {{"method", losses::to_string(method)},
                      {"regularizer", losses::to_string(reg)},
                      {"seed", ctx.cfg.seed},
                      {"fit_epochs", st.fit_epochs},
                      {"run", run_json(res)},
                      {"rud_by_set", report.rud_by_set},
                      {"rud_by_category", report.rud_by_category},
                      {"rud_by_paraphrase", report.rud_by_paraphrase}};
      write_json(out / "summary.json", summary);

      std::printf("%s/%s: %s after %d steps, FE %.3f\n", toy_method.c_str(), toy_reg.c_str(),
                  res.band_reached ? "band reached" : "band never reached", res.trace.steps.back().step,
                  res.trace.steps.back().forget_efficacy);
      for (const auto& [k, v] : report.rud_by_set) std::printf("RUD %-24s %8.2f\n", k.c_str(), v);
      if (!res.band_reached)
        fail(ErrorKind::BandNeverReached, "forget efficacy never entered the band; partial trace written");
    };
  });

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train/test regularization-set sweep on the toy model");
  std::string sw_out;
  std::optional<unsigned> sw_workers;
  std::optional<int> sw_steps;
  sweep->add_option("--out", sw_out, "Output directory (default: configured output path)");
  sweep->add_option("--workers", sw_workers, "Parallel runs");
  sweep->add_option("--max-steps", sw_steps, "Step budget per run");
  sweep->callback([&] {
    action = [&] {
      const auto st = prepare_toy(ctx.cfg);
      toylab::SweepOptions so;
      so.workers = sw_workers.value_or(ctx.cfg.toy.workers);
      so.max_steps = sw_steps.value_or(ctx.cfg.toy.max_steps);
      so.reg_weight = ctx.cfg.loss.reg_weight;
      so.hyper = ctx.cfg.toy.hyper;
      const auto res = toylab::regularization_sweep(st.fitted, st.corpus, so);

      const fs::path out = ctx.resolve(sw_out.empty() ? ctx.cfg.paths.output : fs::path(sw_out));
      io::atomic_write(out / "sweep.csv", toylab::sweep_csv(res));
      json runs = json::array();
      for (const auto& r : res.runs) {
        json rd;
        for (const auto& [t, v] : r.rud) rd[std::string(to_string(t))] = v;
        runs.push_back({{"regularizer", losses::to_string(r.reg)},
                        {"train", to_string(r.train)},
                        {"method", losses::to_string(r.method)},
                        {"band_reached", r.band_reached},
                        {"steps", r.steps},
                        {"forget_efficacy", r.forget_efficacy},
                        {"rud", rd}});
      }
      write_json(out / "sweep_runs.json", runs);

      std::vector<std::string> labels;
      for (auto s : toylab::kRetainSets) labels.emplace_back(toylab::to_string(s));
      for (auto reg : so.regularizers) {
        std::vector<std::vector<double>> grid;
        std::printf("%s  rows: test set, columns: train set (%s)\n", std::string(losses::to_string(reg)).c_str(),
                    "domain entity syn_similar");
        for (auto test : toylab::kRetainSets) {
          auto& row = grid.emplace_back();
          std::printf("  %-12s", std::string(to_string(test)).c_str());
          for (auto train : toylab::kRetainSets) {
            row.push_back(res.at(reg, train, test));
            std::printf(" %8.2f", row.back());
          }
          std::printf("\n");
        }
        io::atomic_write(out / ("heatmap_" + std::string(losses::to_string(reg)) + ".svg"),
                         svg::heatmap(grid, labels, labels,
                                      "RUD (%), regularizer " + std::string(losses::to_string(reg)) +
                                          "; rows test, columns train"));
      }
    };
  });

  // report
  auto* rep = app.add_subcommand("report", "Render a report or trace as CSV / SVG");
  std::string rp_report, rp_trace, rp_csv, rp_svg;
  rep->add_option("--report", rp_report, "Utility report JSON from `evaluate`");
  rep->add_option("--trace", rp_trace, "Trace JSONL from `toy-run`");
  rep->add_option("--csv", rp_csv, "CSV output");
  rep->add_option("--svg", rp_svg, "SVG output (traces only)");
  rep->callback([&] {
    action = [&] {
      if (rp_report.empty() == rp_trace.empty())
        throw CLI::ValidationError("report", "exactly one of --report and --trace is required");
      if (!rp_report.empty()) {
        const auto r = json::parse(io::read_file(ctx.resolve(rp_report))).get<metrics::UtilityReport>();
        std::string csv = "set_kind,count,utility,rud\n";
        for (const auto& [k, s] : r.per_set) {
          const auto it = r.rud.find(k);
          csv += std::string(to_string(k)) + "," + std::to_string(s.count) + "," + io::fmt(s.utility) + "," +
                 (it == r.rud.end() ? "" : io::fmt(it->second)) + "\n";
        }
        if (!rp_csv.empty()) io::atomic_write(ctx.resolve(rp_csv), csv);
        std::cout << csv;
        return;
      }
      toylab::RunTrace trace;
      trace.steps = io::read_jsonl<toylab::TraceStep>(ctx.resolve(rp_trace));
      require(!trace.steps.empty(), ErrorKind::EmptySet, "trace is empty");
      if (!rp_csv.empty()) io::atomic_write(ctx.resolve(rp_csv), toylab::trace_csv(trace));
      if (!rp_svg.empty()) io::atomic_write(ctx.resolve(rp_svg), grad_norm_svg(trace, "Gradient norms during unlearning"));
      std::printf("%zu steps\n", trace.steps.size());
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    ctx.workdir = workdir;
    ctx.load();
    if (action) action();
    return 0;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::ConfigInvalid ? 2 : 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: Io: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: Io: " << e.what() << "\n";
    return 1;
  }
}
