// SPDX-License-Identifier: Apache-2.0
#pragma once

// Adapters from the abstract ports to a JSON request/response transport.
// Fixtures are content-addressed: the key of a call is the FNV-1a 64 hash of
// the canonical JSON {"endpoint": ..., "request": ...}.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "unlearn/error.hpp"
#include "unlearn/metrics.hpp"
#include "unlearn/neighborset.hpp"
#include "unlearn/ports.hpp"
#include "unlearn/textsim.hpp"

namespace unlearn::clients {

using json = nlohmann::json;

inline constexpr const char* kFixturesEnv = "UNLEARN_LAB_FIXTURES";

enum class PortKind { text_generator, token_scorer, embedder, nli_judge, entity_masker, qa_generator };

inline std::string_view to_string(PortKind k) {
  switch (k) {
    case PortKind::text_generator: return "text_generator";
    case PortKind::token_scorer: return "token_scorer";
    case PortKind::embedder: return "embedder";
    case PortKind::nli_judge: return "nli_judge";
    case PortKind::entity_masker: return "entity_masker";
    case PortKind::qa_generator: return "qa_generator";
  }
  return "text_generator";
}

inline PortKind parse_port_kind(std::string_view s) {
  for (auto k : {PortKind::text_generator, PortKind::token_scorer, PortKind::embedder, PortKind::nli_judge,
                 PortKind::entity_masker, PortKind::qa_generator})
    if (to_string(k) == s) return k;
  fail(ErrorKind::InvalidArgument, "unknown port kind '" + std::string(s) + "'");
}

struct Capabilities {
  int max_concurrency = 1;
  bool deterministic = true;
  friend bool operator==(const Capabilities&, const Capabilities&) = default;
};

struct PortDescriptor {
  PortKind kind = PortKind::text_generator;
  std::string endpoint;  // http(s):// URL or a fixture directory
  Capabilities capabilities;

  bool is_remote() const { return endpoint.starts_with("http://") || endpoint.starts_with("https://"); }

  void validate() const {
    require(!endpoint.empty(), ErrorKind::InvalidArgument, "port endpoint is empty");
    require(capabilities.max_concurrency >= 1, ErrorKind::InvalidArgument, "max_concurrency must be >= 1");
    require(is_remote() || capabilities.deterministic, ErrorKind::InvalidArgument,
            "fixture-backed ports are always deterministic");
  }
  friend bool operator==(const PortDescriptor&, const PortDescriptor&) = default;
};

// ---------------------------------------------------------------------------
// Transport

class Transport {
 public:
  virtual ~Transport() = default;
  virtual json post(std::string_view endpoint, const json& request) = 0;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// nlohmann objects keep keys sorted, so dump() is already canonical.
inline std::string fixture_key(std::string_view endpoint, const json& request) {
  const json envelope = {{"endpoint", endpoint}, {"request", request}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(envelope.dump())));
  return buf;
}

/// In-memory view of every *.jsonl fixture file in a directory.
class FixtureStore {
 public:
  struct Entry {
    std::string endpoint;
    json request;
    json response;
  };

  FixtureStore() = default;

  static FixtureStore load(const std::filesystem::path& dir) {
    FixtureStore s;
    s.dir_ = dir;
    require(std::filesystem::is_directory(dir), ErrorKind::Io, "fixture directory '" + dir.string() + "' not found");
    std::vector<std::filesystem::path> files;
    for (const auto& f : std::filesystem::directory_iterator(dir))
      if (f.path().extension() == ".jsonl") files.push_back(f.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f);
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
          const auto j = json::parse(line);
          s.insert({j.at("endpoint").get<std::string>(), j.at("request"), j.at("response")});
        } catch (const json::exception& e) {
          fail(ErrorKind::Io, f.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
      }
    }
    return s;
  }

  void insert(Entry e) {
    auto key = fixture_key(e.endpoint, e.request);
    entries_.insert_or_assign(std::move(key), std::move(e));
  }

  const Entry* find(std::string_view endpoint, const json& request) const {
    const auto it = entries_.find(fixture_key(endpoint, request));
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return entries_.size(); }
  const std::filesystem::path& directory() const { return dir_; }

  /// Sorted by key; stable and diffable.
  void save(const std::filesystem::path& file) const {
    std::filesystem::create_directories(file.parent_path().empty() ? "." : file.parent_path());
    const auto tmp = file.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      require(static_cast<bool>(out), ErrorKind::Io, "cannot write '" + tmp + "'");
      for (const auto& [key, e] : entries_)
        out << json{{"key", key}, {"endpoint", e.endpoint}, {"request", e.request}, {"response", e.response}}.dump()
            << '\n';
    }
    std::filesystem::rename(tmp, file);
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, Entry> entries_;
};

/// Serves calls from fixtures. Strict mode turns a miss into FixtureMiss;
/// otherwise misses go to `fallback` when one is given.
class ReplayTransport final : public Transport {
 public:
  explicit ReplayTransport(FixtureStore store, bool strict = true, Transport* fallback = nullptr)
      : store_(std::move(store)), strict_(strict), fallback_(fallback) {}

  json post(std::string_view endpoint, const json& request) override {
    if (const auto* e = store_.find(endpoint, request)) return e->response;
    if (strict_ || fallback_ == nullptr)
      fail(ErrorKind::FixtureMiss,
           "no fixture for " + std::string(endpoint) + " " + fixture_key(endpoint, request) + ": " + request.dump());
    ++forwarded_;
    return fallback_->post(endpoint, request);
  }

  std::size_t forwarded() const { return forwarded_; }

 private:
  FixtureStore store_;
  bool strict_;
  Transport* fallback_;
  std::atomic<std::size_t> forwarded_{0};
};

/// Forwards to `inner` and keeps every exchange for saving as a fixture file.
class RecordingTransport final : public Transport {
 public:
  explicit RecordingTransport(Transport& inner) : inner_(inner) {}

  json post(std::string_view endpoint, const json& request) override {
    auto response = inner_.post(endpoint, request);
    std::lock_guard lock(mu_);
    store_.insert({std::string(endpoint), request, response});
    return response;
  }

  FixtureStore snapshot() const {
    std::lock_guard lock(mu_);
    return store_;
  }

 private:
  Transport& inner_;
  mutable std::mutex mu_;
  FixtureStore store_;
};

/// In-process transport backed by a handler; used for stubs and tests.
class FunctionTransport final : public Transport {
 public:
  using Handler = std::function<json(std::string_view, const json&)>;
  explicit FunctionTransport(Handler h) : h_(std::move(h)) {}
  json post(std::string_view endpoint, const json& request) override {
    ++calls_;
    return h_(endpoint, request);
  }
  std::size_t calls() const { return calls_; }

 private:
  Handler h_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Retry

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{50};
};

inline bool retryable(ErrorKind k) { return k == ErrorKind::Timeout || k == ErrorKind::PortUnavailable; }

/// Exponential backoff on transient errors. Only wrap idempotent calls.
template <typename F>
auto with_retries(F&& f, const RetryPolicy& policy = {}) -> decltype(f()) {
  auto delay = policy.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      return f();
    } catch (const Error& e) {
      if (!retryable(e.kind()) || attempt >= policy.attempts) throw;
    }
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

// ---------------------------------------------------------------------------
// Typed adapters

namespace detail {

inline const json& field(const json& response, const char* name, std::string_view endpoint) {
  if (!response.is_object() || !response.contains(name))
    fail(ErrorKind::ProtocolError, std::string(endpoint) + " response lacks '" + name + "'");
  return response[name];
}

inline std::vector<double> number_array(const json& j, std::string_view what) {
  if (!j.is_array()) fail(ErrorKind::ProtocolError, std::string(what) + " is not an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) fail(ErrorKind::ProtocolError, std::string(what) + " holds a non-number");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace detail

class RemoteTextGenerator final : public TextGenerator {
 public:
  explicit RemoteTextGenerator(Transport& t) : t_(t) {}
  std::string generate(std::string_view prompt, int max_tokens) override {
    require(max_tokens > 0, ErrorKind::InvalidArgument, "max_tokens must be positive");
    const auto r = t_.post("/generate", {{"prompt", prompt}, {"max_tokens", max_tokens}});
    const auto& text = detail::field(r, "text", "/generate");
    if (!text.is_string()) fail(ErrorKind::ProtocolError, "/generate text is not a string");
    return text.get<std::string>();
  }

 private:
  Transport& t_;
};

class RemoteTokenScorer final : public TokenScorer {
 public:
  explicit RemoteTokenScorer(Transport& t) : t_(t) {}
  std::vector<double> score(std::string_view prompt, std::string_view target) override {
    require(!target.empty(), ErrorKind::LengthZero, "score target is empty");
    const auto r = t_.post("/score", {{"prompt", prompt}, {"target", target}});
    auto probs = detail::number_array(detail::field(r, "token_probs", "/score"), "token_probs");
    if (probs.empty()) fail(ErrorKind::ProtocolError, "/score returned no token probabilities");
    for (double p : probs)
      if (!(p > 0.0 && p <= 1.0)) fail(ErrorKind::ProtocolError, "token probability outside (0, 1]");
    return probs;
  }

 private:
  Transport& t_;
};

class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(Transport& t) : t_(t) {}
  std::vector<double> embed(std::string_view text) override {
    const auto r = t_.post("/embed", {{"text", text}});
    auto v = detail::number_array(detail::field(r, "vector", "/embed"), "vector");
    if (v.empty() || std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }))
      fail(ErrorKind::ProtocolError, "/embed returned a zero vector");
    return v;
  }

 private:
  Transport& t_;
};

class RemoteNliJudge final : public NliJudge {
 public:
  explicit RemoteNliJudge(Transport& t) : t_(t) {}
  NliLabel nli(std::string_view premise, std::string_view hypothesis) override {
    const auto r = t_.post("/nli", {{"premise", premise}, {"hypothesis", hypothesis}});
    const auto& label = detail::field(r, "label", "/nli");
    if (!label.is_string()) fail(ErrorKind::ProtocolError, "/nli label is not a string");
    return parse_nli_label(label.get<std::string>());
  }

 private:
  Transport& t_;
};

// ---------------------------------------------------------------------------
// Bounded dispatch

struct DispatchStats {
  std::size_t max_in_flight = 0;
};

/// Runs `call(i)` for i in [0, n) with at most `max_concurrency` in flight.
/// Result i always belongs to request i regardless of completion order. The
/// first failure, by request index, is rethrown after all calls finish.
template <typename R, typename F>
std::vector<R> dispatch_bounded(std::size_t n, F&& call, int max_concurrency, DispatchStats* stats = nullptr) {
  require(max_concurrency >= 1, ErrorKind::InvalidArgument, "max_concurrency must be >= 1");
  std::vector<std::optional<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::counting_semaphore<> gate(max_concurrency);
  std::atomic<std::size_t> in_flight{0}, peak{0};
  {
    std::vector<std::jthread> threads;
    threads.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      gate.acquire();
      threads.emplace_back([&, i] {
        const auto now = ++in_flight;
        auto seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        try {
          slots[i].emplace(call(i));
        } catch (...) {
          errors[i] = std::current_exception();
        }
        --in_flight;
        gate.release();
      });
    }
  }
  if (stats) stats->max_in_flight = peak.load();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Produces evaluation records for every dataset question: the model's
/// greedy answer and the per-token probabilities of the reference answer.
inline std::vector<metrics::EvalRecord> collect_eval_records(std::span<const QAPair> dataset,
                                                             TextGenerator& generator, TokenScorer& scorer,
                                                             const std::string& model_tag, int max_tokens = 64,
                                                             int max_concurrency = 1) {
  return dispatch_bounded<metrics::EvalRecord>(
      dataset.size(),
      [&](std::size_t i) {
        const auto& q = dataset[i];
        metrics::EvalRecord r;
        r.id = q.id;
        r.model_tag = model_tag;
        r.generation = with_retries([&] { return generator.generate(q.question, max_tokens); });
        r.token_probs = with_retries([&] { return scorer.score(q.question, q.answer); });
        return r;
      },
      max_concurrency);
}

// ---------------------------------------------------------------------------
// LLM-backed masker and template filler

/// Asks a generator to rewrite a sentence with every named entity replaced by
/// {X}, then recovers the spans against the original text.
class LlmEntityMasker final : public textsim::EntityMasker {
 public:
  explicit LlmEntityMasker(TextGenerator& g, int max_tokens = 128) : g_(g), max_tokens_(max_tokens) {}

  static std::string prompt_for(std::string_view sentence) {
    return "Rewrite the sentence below, replacing each named entity, date and number with the token {X}. "
           "Keep every other character unchanged and output only the rewritten sentence.\nSentence: " +
           std::string(sentence);
  }

  textsim::MaskedSentence mask(std::string_view sentence) const override {
    std::string reply;
    try {
      reply = g_.generate(prompt_for(sentence), max_tokens_);
    } catch (const Error& e) {
      fail(ErrorKind::MaskerUnavailable, e.what());
    }
    while (!reply.empty() && (reply.back() == '\n' || reply.back() == ' ')) reply.pop_back();
    return textsim::align_masked(std::string(sentence), reply);
  }

  bool concurrent_safe() const override { return false; }

 private:
  TextGenerator& g_;
  int max_tokens_;
};

/// Asks a generator to fill one slot of a masked question and answer it. The
/// reply is JSON: {"question", "answer", "aliases"} or {"unknown": true}.
class LlmQaGenerator final : public QaGenerator {
 public:
  explicit LlmQaGenerator(TextGenerator& g, int max_tokens = 256) : g_(g), max_tokens_(max_tokens) {}

  static std::string prompt_for(const textsim::MaskedSentence& templ, std::size_t slot, std::string_view entity) {
    return "Question template: " + templ.masked + "\nPlace \"" + std::string(entity) + "\" in slot " +
           std::to_string(slot) +
           " and fill the other {X} slots so the question is answerable about that entity. Reply with JSON "
           "{\"question\": ..., \"answer\": ..., \"aliases\": [...]} or {\"unknown\": true}.";
  }

  std::optional<GeneratedQa> generate(const textsim::MaskedSentence& templ, std::size_t slot,
                                      std::string_view entity) override {
    const auto reply = g_.generate(prompt_for(templ, slot, entity), max_tokens_);
    json j;
    try {
      j = json::parse(reply);
    } catch (const json::exception&) {
      fail(ErrorKind::ProtocolError, "QA generator reply is not JSON");
    }
    if (j.value("unknown", false)) return std::nullopt;
    try {
      GeneratedQa qa{j.at("question").get<std::string>(), j.at("answer").get<std::string>(), {}};
      if (j.contains("aliases")) qa.aliases = j["aliases"].get<std::vector<std::string>>();
      return qa;
    } catch (const json::exception& e) {
      fail(ErrorKind::ProtocolError, std::string("malformed QA generator reply: ") + e.what());
    }
  }

 private:
  TextGenerator& g_;
  int max_tokens_;
};

// ---------------------------------------------------------------------------
// Fixture directory resolution

/// The environment variable wins over the configured directory.
inline std::filesystem::path fixture_directory(const std::filesystem::path& configured) {
  if (const char* env = std::getenv(kFixturesEnv); env != nullptr && *env != '\0') return env;
  return configured;
}

}  // namespace unlearn::clients
