// SPDX-License-Identifier: Apache-2.0
#pragma once

// Drives unlearn-lab through the neighbor-set and evaluation pipeline on the
// stub world. Port endpoints are whatever the caller puts in the two configs:
// live stub servers when recording, fixture directories when replaying.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stub_world.hpp"

namespace pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

/// Outputs compared byte for byte against tests/fixtures/golden.
inline const std::vector<std::string>& golden_files() {
  static const std::vector<std::string> files = {
      "clusters.jsonl",    "syn.jsonl",     "dataset.jsonl",      "distinctness.json", "before_log.jsonl",
      "before_report.json", "after_log.jsonl", "after_report.json", "after_report.csv",
  };
  return files;
}

struct Endpoints {
  std::string before;  // text_generator and token_scorer of the original model
  std::string after;   // the same two ports for the unlearned model
  std::string shared;  // qa_generator, embedder, nli_judge
};

inline json port(std::string_view kind, const std::string& endpoint) {
  return {{"kind", kind}, {"endpoint", endpoint}};
}

inline json config_for(const std::string& model, const std::string& shared) {
  return {{"seed", 7},
          {"ports",
           {port("text_generator", model), port("token_scorer", model), port("qa_generator", shared),
            port("embedder", shared), port("nli_judge", shared)}}};
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

/// Writes the inputs (seed dataset, candidates, configs) into `workdir`.
inline void prepare(const fs::path& workdir, const Endpoints& ep) {
  fs::create_directories(workdir);
  unlearn::io::write_jsonl<unlearn::QAPair>(workdir / "seed_dataset.jsonl", stub_world::seed_dataset());
  std::string cands;
  for (const auto& c : stub_world::candidates()) cands += c + "\n";
  spit(workdir / "candidates.txt", cands);
  spit(workdir / "before.json", config_for(ep.before, ep.shared).dump(2) + "\n");
  spit(workdir / "after.json", config_for(ep.after, ep.shared).dump(2) + "\n");
}

struct Result {
  bool ok = true;
  std::string failed_step;
  std::string log;
};

inline std::string quote(const std::string& s) { return "'" + s + "'"; }

/// Runs every step; stops at the first non-zero exit.
inline Result run(const fs::path& cli, const fs::path& workdir) {
  Result r;
  const std::string base = quote(cli.string()) + " --workdir " + quote(workdir.string()) + " ";
  auto step = [&](const std::string& name, const std::string& args) {
    if (!r.ok) return;
    const std::string cmd = base + args + " >> " + quote((workdir / "pipeline.log").string()) + " 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      r.ok = false;
      r.failed_step = name;
    }
  };
  step("cluster", "cluster --forget seed_dataset.jsonl --out clusters.jsonl");
  step("build-synset",
       "--config before.json build-synset --clusters clusters.jsonl --dataset seed_dataset.jsonl "
       "--candidates candidates.txt --out syn.jsonl");
  if (r.ok) spit(workdir / "dataset.jsonl", slurp(workdir / "seed_dataset.jsonl") + slurp(workdir / "syn.jsonl"));
  step("validate-sets", "validate-sets --dataset dataset.jsonl --out distinctness.json");
  step("evaluate before",
       "--config before.json evaluate --dataset dataset.jsonl --collect before_log.jsonl --tag before "
       "--out before_report.json");
  step("evaluate after",
       "--config after.json evaluate --dataset dataset.jsonl --collect after_log.jsonl --tag after "
       "--reference before_log.jsonl --baseline before_report.json --out after_report.json "
       "--csv after_report.csv");
  r.log = slurp(workdir / "pipeline.log");
  return r;
}

}  // namespace pipeline
