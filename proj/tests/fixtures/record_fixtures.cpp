// SPDX-License-Identifier: Apache-2.0
//
// Regenerates tests/fixtures/replay and tests/fixtures/golden.
//
//   record_fixtures <unlearn-lab binary> <tests/fixtures directory>
//
// Three stub services (original model, unlearned model, shared judges) listen
// on loopback ports and log every exchange while the CLI runs the pipeline.

#include <chrono>
#include <iostream>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "pipeline.hpp"
#include "stub_world.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class StubServer {
 public:
  explicit StubServer(stub_world::Model m) : model_(m) {
    for (const char* ep : {"/generate", "/score", "/embed", "/nli"}) {
      server_.Post(ep, [this, ep](const httplib::Request& req, httplib::Response& res) {
        const auto body = json::parse(req.body);
        const auto reply = stub_world::handle(model_, ep, body);
        {
          std::lock_guard lock(mu_);
          store_.insert({ep, body, reply});
        }
        res.set_content(reply.dump(), "application/json");
      });
    }
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  void save(const fs::path& file) const {
    std::lock_guard lock(mu_);
    store_.save(file);
  }

 private:
  stub_world::Model model_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  unlearn::clients::FixtureStore store_;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: record_fixtures <unlearn-lab> <fixtures-dir>\n";
    return 2;
  }
  const fs::path cli = fs::absolute(argv[1]);
  const fs::path out = fs::absolute(argv[2]);
  const fs::path work = fs::temp_directory_path() / "unlearn_record";
  fs::remove_all(work);

  StubServer before(stub_world::Model::before), after(stub_world::Model::after),
      shared(stub_world::Model::before);
  pipeline::prepare(work, {before.url(), after.url(), shared.url()});
  const auto r = pipeline::run(cli, work);
  std::cout << r.log;
  if (!r.ok) {
    std::cerr << "pipeline failed at " << r.failed_step << "\n";
    return 1;
  }

  fs::remove_all(out / "replay");
  before.save(out / "replay" / "before" / "recorded.jsonl");
  after.save(out / "replay" / "after" / "recorded.jsonl");
  shared.save(out / "replay" / "shared" / "recorded.jsonl");
  fs::create_directories(out / "golden");
  for (const auto& f : pipeline::golden_files()) fs::copy_file(work / f, out / "golden" / f, fs::copy_options::overwrite_existing);
  std::cout << "fixtures written to " << out.string() << "\n";
  return 0;
}
