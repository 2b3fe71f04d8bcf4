// Copyright 2026 The qselftest Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Session runner, run statistics, empirical failure measures and sweeps.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qselftest/analysis.hpp"
#include "qselftest/device.hpp"
#include "qselftest/entcf.hpp"
#include "qselftest/net.hpp"
#include "qselftest/protocol.hpp"
#include "qselftest/provers.hpp"

namespace qst {

enum class Transport { in_process, tcp, stdio };

inline Transport transport_from_string(const std::string& s) {
  if (s == "in_process" || s == "in-process") return Transport::in_process;
  if (s == "tcp") return Transport::tcp;
  if (s == "stdio") return Transport::stdio;
  throw ConfigError("unknown transport '" + s + "'");
}

inline const char* to_string(Transport t) {
  switch (t) {
    case Transport::in_process: return "in_process";
    case Transport::tcp: return "tcp";
    case Transport::stdio: return "stdio";
  }
  return "?";
}

struct RunConfig {
  EntcfParams params = EntcfParams::ideal();
  std::size_t sessions = 1000;
  std::string strategy = "honest";
  std::uint64_t seed = 1;
  std::uint64_t first_session = 0;
  std::size_t workers = 0;  // 0: hardware concurrency
  std::string transcript_path;
  std::string stats_path;
  Transport transport = Transport::in_process;
  std::string address = "127.0.0.1:0";
  int timeout_ms = kDefaultTimeoutMs;

  void validate() const {
    params.validate();
    if (sessions < 1) throw ConfigError("sessions must be at least 1");
    (void)parse_strategy(strategy);
    if (timeout_ms <= 0) throw ConfigError("timeout must be positive");
  }
};

inline RunConfig run_config_from_json(const json& j) {
  try {
    RunConfig c;
    if (j.contains("entcf")) c.params = params_from_json(j["entcf"]);
    c.sessions = j.value("sessions", c.sessions);
    c.strategy = j.value("strategy", c.strategy);
    c.seed = j.value("seed", c.seed);
    c.first_session = j.value("first_session", c.first_session);
    c.workers = j.value("workers", c.workers);
    c.transcript_path = j.value("transcripts", c.transcript_path);
    c.stats_path = j.value("stats", c.stats_path);
    if (j.contains("transport")) c.transport = transport_from_string(j["transport"].get<std::string>());
    c.address = j.value("address", c.address);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

inline json run_config_to_json(const RunConfig& c) {
  return {{"entcf", params_to_json(c.params)}, {"sessions", c.sessions},   {"strategy", c.strategy},
          {"seed", c.seed},                    {"first_session", c.first_session},
          {"workers", c.workers},              {"transcripts", c.transcript_path},
          {"stats", c.stats_path},             {"transport", to_string(c.transport)},
          {"address", c.address},              {"timeout_ms", c.timeout_ms}};
}

// ---------------------------------------------------------------------------
// Empirical estimates

inline constexpr std::size_t kMinEntrySamples = 30;

struct EntryEstimate {
  std::string name;
  std::size_t successes = 0;
  std::size_t trials = 0;
  bool sufficient = false;
  double frequency() const { return trials ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0; }
};

struct GammaEstimate {
  double value = 0.0;
  double sigma = 0.0;  // binomial σ of the minimizing entry
  bool available = false;
  std::vector<EntryEstimate> entries;
};

struct FailureRate {
  std::size_t failures = 0;
  std::size_t trials = 0;
  double rate() const { return trials ? static_cast<double>(failures) / static_cast<double>(trials) : 0.0; }
  double sigma() const {
    if (!trials) return 0.0;
    const double p = rate();
    return std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  }
};

struct EmpiricalGammas {
  GammaEstimate P, T, B;
  // Conditional failure rates: preimage rounds; test-case Hadamard rounds;
  // Bell-case Hadamard rounds with a checked question pair.
  FailureRate fail_pre, fail_test, fail_bell;
  std::vector<std::string> warnings;
};

namespace detail {

inline GammaEstimate finish_gamma(std::vector<EntryEstimate> entries, const char* label,
                                  std::vector<std::string>& warnings) {
  GammaEstimate g;
  g.entries = std::move(entries);
  const EntryEstimate* worst = nullptr;
  for (auto& e : g.entries) {
    e.sufficient = e.trials >= kMinEntrySamples;
    if (!e.sufficient) {
      warnings.push_back(std::string(label) + " entry " + e.name + ": insufficient data (" + std::to_string(e.trials) +
                         " samples)");
      continue;
    }
    if (!worst || e.frequency() < worst->frequency()) worst = &e;
  }
  if (worst) {
    g.available = true;
    const double f = worst->frequency();
    g.value = std::clamp(1.0 - f, 0.0, 1.0);
    g.sigma = std::sqrt(f * (1.0 - f) / static_cast<double>(worst->trials));
  }
  return g;
}

struct TupleSlot {
  const char* name;
  int basis;  // θ1*2 + θ2
  int q;      // q1*2 + q2
  int which;  // 0: v1, 1: v2, 2: v1 ^ v2 against t1, 3: v1 ^ v2 against t2
};

// Entries of the test and Bell tuples with the session slot that estimates each.
inline constexpr std::array<TupleSlot, 8> kTestSlots = {{{"Z1", 1, 0, 0},
                                                         {"Zt1", 1, 1, 0},
                                                         {"X1", 2, 3, 0},
                                                         {"Xt1", 2, 2, 0},
                                                         {"Z2", 2, 0, 1},
                                                         {"Zt2", 2, 2, 1},
                                                         {"X2", 1, 3, 1},
                                                         {"Xt2", 1, 1, 1}}};
inline constexpr std::array<TupleSlot, 2> kBellSlots = {{{"Zt1Xt2", 3, 1, 2}, {"Xt1Zt2", 3, 2, 3}}};

}  // namespace detail

/// Empirical tuple entries as conditional success frequencies, 1 − min over
/// entries with enough samples.
inline EmpiricalGammas estimate_gammas(const std::vector<TranscriptRecord>& records) {
  std::vector<EntryEstimate> p(8), t(8), b(2);
  for (int leg = 0; leg < 2; ++leg)
    for (int th = 0; th < 4; ++th) p[leg * 4 + th].name = "leg" + std::to_string(leg + 1) + "@" + basis_key(th / 2, th % 2);
  for (std::size_t k = 0; k < 8; ++k) t[k].name = detail::kTestSlots[k].name;
  for (std::size_t k = 0; k < 2; ++k) b[k].name = detail::kBellSlots[k].name;

  EmpiricalGammas out;
  for (const auto& r : records) {
    if (!r.flag || !r.round || !r.images) continue;
    const int th = r.basis.index();
    if (*r.round == RoundType::preimage) {
      if (!r.preimage) continue;
      const bool ok1 = chk(r.keys[0], (*r.images)[0], r.preimage->b1, r.preimage->x1);
      const bool ok2 = chk(r.keys[1], (*r.images)[1], r.preimage->b2, r.preimage->x2);
      p[th].trials++;
      p[th].successes += ok1;
      p[4 + th].trials++;
      p[4 + th].successes += ok2;
      out.fail_pre.trials++;
      out.fail_pre.failures += (*r.flag == Flag::fail_pre);
      continue;
    }
    if (!r.questions || !r.answers) continue;
    const auto targets = targets_from(r.basis, r.decoded);
    const int q = (*r.questions)[0] * 2 + (*r.questions)[1];
    const int v1 = (*r.answers)[0], v2 = (*r.answers)[1];
    auto hit = [&](const std::optional<int>& target, int got) { return target && *target == got; };
    for (std::size_t k = 0; k < 8; ++k) {
      const auto& s = detail::kTestSlots[k];
      if (s.basis != th || s.q != q) continue;
      t[k].trials++;
      t[k].successes += s.which == 0 ? hit(targets.t1, v1) : hit(targets.t2, v2);
    }
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& s = detail::kBellSlots[k];
      if (s.basis != th || s.q != q) continue;
      b[k].trials++;
      b[k].successes += hit(s.which == 2 ? targets.t1 : targets.t2, v1 ^ v2);
    }
    if (r.basis.is_test_case()) {
      out.fail_test.trials++;
      out.fail_test.failures += (*r.flag == Flag::fail_test);
    } else if (r.basis.is_bell_case() && (q == 1 || q == 2)) {
      out.fail_bell.trials++;
      out.fail_bell.failures += (*r.flag == Flag::fail_bell);
    }
  }
  out.P = detail::finish_gamma(std::move(p), "gamma_P", out.warnings);
  out.T = detail::finish_gamma(std::move(t), "gamma_T", out.warnings);
  out.B = detail::finish_gamma(std::move(b), "gamma_B", out.warnings);
  return out;
}

// ---------------------------------------------------------------------------
// Run statistics

struct RunStats {
  std::size_t sessions = 0;
  std::size_t errors = 0;  // sessions without a verdict
  // "<θ1θ2>/<round>/<q1q2 or -->/<flag>" → count
  std::map<std::string, std::size_t> counts;
  std::map<std::string, std::size_t> flag_totals;
  EmpiricalGammas gammas;
};

inline std::string count_key(const TranscriptRecord& r) {
  std::string key = basis_key(r.basis.theta1, r.basis.theta2) + "/" + to_string(*r.round) + "/";
  key += r.questions ? basis_key((*r.questions)[0], (*r.questions)[1]) : std::string("--");
  return key + "/" + to_string(*r.flag);
}

inline RunStats compute_stats(const std::vector<TranscriptRecord>& records) {
  RunStats s;
  s.sessions = records.size();
  for (const auto& r : records) {
    if (!r.flag || !r.round) {
      ++s.errors;
      continue;
    }
    ++s.counts[count_key(r)];
    ++s.flag_totals[to_string(*r.flag)];
  }
  s.gammas = estimate_gammas(records);
  return s;
}

inline json gamma_estimate_to_json(const GammaEstimate& g) {
  json entries = json::array();
  for (const auto& e : g.entries)
    entries.push_back({{"name", e.name},
                       {"successes", e.successes},
                       {"trials", e.trials},
                       {"frequency", e.frequency()},
                       {"sufficient", e.sufficient}});
  return {{"value", g.available ? json(g.value) : json(nullptr)},
          {"sigma", g.sigma},
          {"three_sigma", 3.0 * g.sigma},
          {"entries", std::move(entries)}};
}

inline json failure_rate_to_json(const FailureRate& f) {
  return {{"failures", f.failures}, {"trials", f.trials}, {"rate", f.rate()}, {"sigma", f.sigma()}};
}

inline json stats_to_json(const RunStats& s) {
  return {{"sessions", s.sessions},
          {"errors", s.errors},
          {"counts", s.counts},
          {"flags", s.flag_totals},
          {"gamma_P", gamma_estimate_to_json(s.gammas.P)},
          {"gamma_T", gamma_estimate_to_json(s.gammas.T)},
          {"gamma_B", gamma_estimate_to_json(s.gammas.B)},
          {"fail_pre", failure_rate_to_json(s.gammas.fail_pre)},
          {"fail_test", failure_rate_to_json(s.gammas.fail_test)},
          {"fail_bell", failure_rate_to_json(s.gammas.fail_bell)},
          {"warnings", s.gammas.warnings}};
}

// ---------------------------------------------------------------------------
// Runner

/// One session with verifier and prover exchanging wire messages in memory.
inline TranscriptRecord run_session_in_process(const EntcfParams& params, const StrategyFactory& factory,
                                               std::uint64_t root_seed, std::uint64_t sid) {
  VerifierSession vs(params, sid, derive_stream(root_seed, sid, StreamRole::verifier));
  TrapdoorOracle oracle = [&vs](std::uint64_t, const std::array<PublicKey, 2>&) { return vs.record().trapdoors; };
  ProverSession ps(factory(), derive_stream(root_seed, sid, StreamRole::prover), oracle);
  try {
    // Round-trip each message through its serialized form, as on the wire.
    json msg = json::parse(vs.open().dump());
    for (;;) {
      const auto reply = ps.handle(msg);
      if (!reply) break;
      msg = json::parse(vs.handle(json::parse(reply->dump())).dump());
    }
  } catch (const std::exception& e) {
    vs.abort(std::string("prover failure: ") + e.what());
  }
  return vs.record();
}

namespace detail {

inline std::vector<TranscriptRecord> run_in_process(const RunConfig& c, const StrategyFactory& factory) {
  std::vector<TranscriptRecord> out(c.sessions);
  const std::size_t workers =
      std::max<std::size_t>(1, std::min(c.sessions, c.workers ? c.workers : std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < c.sessions;) {
      const std::uint64_t sid = c.first_session + k;
      try {
        out[k] = run_session_in_process(c.params, factory, c.seed, sid);
      } catch (const std::exception& e) {
        out[k].session_id = sid;
        out[k].params = c.params;
        out[k].error = std::string("session failure: ") + e.what();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return out;
}

inline std::vector<TranscriptRecord> sorted_records(std::vector<TranscriptRecord> recs) {
  std::sort(recs.begin(), recs.end(),
            [](const TranscriptRecord& a, const TranscriptRecord& b) { return a.session_id < b.session_id; });
  return recs;
}

inline std::vector<TranscriptRecord> run_tcp(const RunConfig& c, const StrategyFactory& factory) {
  std::vector<TranscriptRecord> recs;
  VerifierServer::Options opt;
  opt.address = c.address;
  opt.params = c.params;
  opt.seed = c.seed;
  opt.first_session = c.first_session;
  opt.max_sessions = c.sessions;
  opt.timeout_ms = c.timeout_ms;
  VerifierServer server(opt, [&recs](const TranscriptRecord& r) { recs.push_back(r); });
  const std::string addr = "127.0.0.1:" + std::to_string(server.port());
  std::thread accept_loop([&server] { server.run(); });
  try {
    connect_prover(addr, factory, replay_oracle(c.seed), c.seed, c.sessions, c.timeout_ms);
  } catch (...) {
    server.stop();
    accept_loop.join();
    throw;
  }
  accept_loop.join();
  return sorted_records(std::move(recs));
}

// Prover in a forked child, connected by two pipes.
inline std::vector<TranscriptRecord> run_stdio(const RunConfig& c, const StrategyFactory& factory) {
  int to_child[2], from_child[2];
  if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) throw TransportError("pipe failed");
  const pid_t pid = ::fork();
  if (pid < 0) throw TransportError("fork failed");
  if (pid == 0) {
    ::close(to_child[1]);
    ::close(from_child[0]);
    int code = 0;
    try {
      LineChannel ch(to_child[0], from_child[1]);
      prove_stream(ch, factory, replay_oracle(c.seed), c.seed, c.timeout_ms);
    } catch (...) {
      code = 1;
    }
    ::_exit(code);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  std::vector<TranscriptRecord> recs;
  {
    LineChannel ch(from_child[0], to_child[1]);
    for (std::size_t k = 0; k < c.sessions; ++k)
      recs.push_back(serve_session(ch, c.params, c.first_session + k, c.seed, c.timeout_ms));
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  return recs;
}

}  // namespace detail

struct RunResult {
  std::vector<TranscriptRecord> records;  // ordered by session id
  RunStats stats;
};

inline void write_transcripts(const std::vector<TranscriptRecord>& records, std::ostream& os) {
  for (const auto& r : records) os << transcript_to_json(r).dump() << '\n';
}

inline std::vector<TranscriptRecord> read_transcripts(std::istream& is) {
  std::vector<TranscriptRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(transcript_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw MalformedMessageError("transcript line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Runs config.sessions independent sessions over the configured transport,
/// writes transcripts and stats if paths are set.
inline RunResult run_sessions(const RunConfig& c) {
  c.validate();
  const StrategyFactory factory = parse_strategy(c.strategy);
  RunResult r;
  switch (c.transport) {
    case Transport::in_process: r.records = detail::run_in_process(c, factory); break;
    case Transport::tcp: r.records = detail::run_tcp(c, factory); break;
    case Transport::stdio: r.records = detail::run_stdio(c, factory); break;
  }
  r.stats = compute_stats(r.records);
  if (!c.transcript_path.empty()) {
    std::ofstream os(c.transcript_path);
    if (!os) throw std::runtime_error("cannot open transcript file " + c.transcript_path);
    write_transcripts(r.records, os);
  }
  if (!c.stats_path.empty()) {
    std::ofstream os(c.stats_path);
    if (!os) throw std::runtime_error("cannot open stats file " + c.stats_path);
    os << stats_to_json(r.stats).dump(2) << '\n';
  }
  return r;
}

// ---------------------------------------------------------------------------
// Sweep

inline constexpr const char* kSweepHeader =
    "p,gamma_T,gamma_B,max_bell_distance,max_residual,gamma_T_hat,gamma_T_hat_sigma,gamma_B_hat,gamma_B_hat_sigma,"
    "gamma_P_hat,gamma_P_hat_sigma";

struct SweepRow {
  double p = 0.0;
  double gamma_T = 0.0, gamma_B = 0.0, max_bell_distance = 0.0, max_residual = 0.0;
  GammaEstimate gt_hat, gb_hat, gp_hat;
};

/// White-box diagnostics of from_honest(p) next to a protocol run of
/// honest_depolarized:p, one row per grid point.
inline std::vector<SweepRow> sweep(const std::vector<double>& grid, RunConfig base) {
  if (grid.empty()) throw ConfigError("sweep grid must be nonempty");
  std::vector<SweepRow> rows;
  for (double p : grid) {
    SweepRow row;
    row.p = p;
    const auto report = analyze(from_honest(p));
    row.gamma_T = report.gamma_T.value;
    row.gamma_B = report.gamma_B.value;
    row.max_bell_distance = report.max_bell_distance();
    row.max_residual = report.max_residual();
    RunConfig c = base;
    c.strategy = "honest_depolarized:" + json(p).dump();
    c.transcript_path.clear();
    c.stats_path.clear();
    const auto run = run_sessions(c);
    row.gt_hat = run.stats.gammas.T;
    row.gb_hat = run.stats.gammas.B;
    row.gp_hat = run.stats.gammas.P;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os.precision(12);
  os << kSweepHeader << '\n';
  auto est = [&os](const GammaEstimate& g) {
    if (g.available)
      os << g.value;
    else
      os << "nan";
    os << ',' << g.sigma;
  };
  for (const auto& r : rows) {
    os << r.p << ',' << r.gamma_T << ',' << r.gamma_B << ',' << r.max_bell_distance << ',' << r.max_residual << ',';
    est(r.gt_hat);
    os << ',';
    est(r.gb_hat);
    os << ',';
    est(r.gp_hat);
    os << '\n';
  }
  return os.str();
}

}  // namespace qst
