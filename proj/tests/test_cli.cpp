// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>

#include "pipeline.hpp"
#include "unlearn/unlearn.hpp"

using namespace unlearn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string("'") + UNLEARN_LAB_BIN + "' " + args + " 2>&1";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("unlearn_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

pipeline::Endpoints replay_endpoints() {
  const auto root = fs::absolute(fs::path(UNLEARN_FIXTURE_DIR) / "replay");
  return {(root / "before").string(), (root / "after").string(), (root / "shared").string()};
}

}  // namespace

TEST(Cli, SimOfMaskedEntitySwapIsOne) {
  const auto r = cli("sim --a 'Which award did J. K. Rowling win?' --b 'Which award did Tom Hanks win?' "
                     "--entity 'J. K. Rowling' --entity 'Tom Hanks'");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out, "1.0\n");
  const auto raw = cli("sim --a abc --b abd");
  EXPECT_NEAR(json::parse(raw.out).get<double>(), 2.0 / 3.0, 1e-9);
}

TEST(Cli, MaskPrintsTemplate) {
  const auto r = cli("mask --text 'When was Marlow Kestrel born?' --entity 'Marlow Kestrel'");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out, "When was {X} born?\n");
}

TEST(Cli, RudPrintsPercent) {
  EXPECT_EQ(cli("rud --before 0.770 --after 0.375").out, "-51.30\n");
  EXPECT_EQ(cli("rud --before 0.712 --after 0.411").out, "-42.28\n");
  const auto zero = cli("rud --before 0 --after 0.3");
  EXPECT_EQ(zero.code, 1);
  EXPECT_NE(zero.out.find("ZeroBaseline"), std::string::npos) << zero.out;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("sim --a x").code, 2);
  EXPECT_EQ(cli("--help").code, 0);

  const auto d = temp_dir("codes");
  pipeline::spit(d / "bad.json", R"({"sed": 3})");
  const auto bad = cli("--workdir '" + d.string() + "' --config bad.json rud --before 1 --after 1");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("sed"), std::string::npos) << bad.out;

  const auto missing = cli("--workdir '" + d.string() + "' validate-sets --dataset nope.jsonl");
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.out.find("Io"), std::string::npos) << missing.out;
}

TEST(Cli, ToyRunWritesArtifactsAndIsReproducible) {
  const auto d = temp_dir("toy");
  const auto a = cli("--workdir '" + d.string() + "' toy-run --method GA --out a");
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_NE(a.out.find("GA/none: band reached"), std::string::npos) << a.out;
  const auto b = cli("--workdir '" + d.string() + "' toy-run --method GA --out b");
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(a.out, b.out);
  for (const char* f : {"corpus.jsonl", "trace.jsonl", "trace.csv", "grad_norms.svg", "summary.json"})
    EXPECT_EQ(pipeline::slurp(d / "a" / f), pipeline::slurp(d / "b" / f)) << f;

  const auto summary = json::parse(pipeline::slurp(d / "a" / "summary.json"));
  const auto& rud = summary.at("rud_by_set");
  EXPECT_LT(rud.at("syn_similar_neighbor").get<double>(), rud.at("domain_neighbor").get<double>() - 10.0);
  EXPECT_LT(rud.at("syn_similar_neighbor").get<double>(), rud.at("entity_neighbor").get<double>() - 10.0);

  const auto rep = cli("--workdir '" + d.string() + "' report --trace a/trace.jsonl --svg a/again.svg");
  EXPECT_EQ(rep.code, 0) << rep.out;
  EXPECT_TRUE(fs::exists(d / "a" / "again.svg"));
}

TEST(Cli, ToyRunOutsideTheBandExitsOne) {
  const auto d = temp_dir("noband");
  const auto r = cli("--workdir '" + d.string() + "' toy-run --method GA --max-steps 1 --out x");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("BandNeverReached"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(d / "x" / "trace.jsonl"));
}

TEST(Cli, ReplayPipelineReproducesGoldenOutputs) {
  const auto d = temp_dir("pipeline");
  pipeline::prepare(d, replay_endpoints());
  const auto r = pipeline::run(UNLEARN_LAB_BIN, d);
  ASSERT_TRUE(r.ok) << r.failed_step << "\n" << r.log;
  const fs::path golden = fs::path(UNLEARN_FIXTURE_DIR) / "golden";
  for (const auto& f : pipeline::golden_files())
    EXPECT_EQ(pipeline::slurp(d / f), pipeline::slurp(golden / f)) << f;
  EXPECT_NE(r.log.find("ok: 0 similarity"), std::string::npos) << r.log;
}

TEST(Cli, UnrecordedRequestIsAFixtureMiss) {
  const auto d = temp_dir("miss");
  pipeline::prepare(d, replay_endpoints());
  std::vector<QAPair> ds = stub_world::seed_dataset();
  ds[0].question = "A question nobody recorded?";
  io::write_jsonl<QAPair>(d / "ds.jsonl", ds);
  const auto r = cli("--workdir '" + d.string() + "' --config before.json evaluate --dataset ds.jsonl "
                     "--collect log.jsonl --out rep.json");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FixtureMiss"), std::string::npos) << r.out;
}

TEST(Cli, EnvironmentRedirectsEveryFixtureDirectory) {
  const auto d = temp_dir("env");
  pipeline::prepare(d, replay_endpoints());
  ::setenv(clients::kFixturesEnv, (d / "no_such_dir").c_str(), 1);
  const auto r = cli("--workdir '" + d.string() + "' --config before.json evaluate --dataset seed_dataset.jsonl "
                     "--collect log.jsonl --out rep.json");
  ::unsetenv(clients::kFixturesEnv);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("no_such_dir"), std::string::npos) << r.out;
}

TEST(Cli, ValidateSetsFlagsOverlappingNeighbors) {
  const auto d = temp_dir("overlap");
  auto ds = stub_world::seed_dataset();
  QAPair clash = ds[0];
  clash.id = "d9";
  clash.set_kind = SetKind::domain_neighbor;
  clash.question = "What award did Marlow Kestrel win in 1986?";
  ds.push_back(clash);
  io::write_jsonl<QAPair>(d / "ds.jsonl", ds);
  const auto r = cli("--workdir '" + d.string() + "' validate-sets --dataset ds.jsonl --out rep.json");
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("violations"), std::string::npos) << r.out;
  const auto rep = json::parse(pipeline::slurp(d / "rep.json"));
  EXPECT_FALSE(rep.at("ok").get<bool>());
}
