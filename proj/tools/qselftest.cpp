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

// qselftest: run, analyze and sweep self-testing sessions.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qselftest/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw qst::ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw qst::ConfigError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << text;
}

// Flags shared by run, sweep, serve and prove. Only flags given on the
// command line override the config file.
struct CommonFlags {
  std::string config;
  std::string backend;
  std::size_t sessions = 0;
  std::string strategy;
  std::uint64_t seed = 0;
  std::uint64_t first_session = 0;
  std::size_t workers = 0;
  std::string transport;
  std::string address;
  int timeout_ms = 0;
  std::string transcripts;
  std::string stats;

  CLI::Option *o_backend{}, *o_sessions{}, *o_strategy{}, *o_seed{}, *o_first{}, *o_workers{}, *o_transport{},
      *o_address{}, *o_timeout{}, *o_transcripts{}, *o_stats{};

  void add(CLI::App* app, bool with_transport) {
    app->add_option("-c,--config", config, "JSON run config");
    o_backend = app->add_option("--backend", backend, "ideal | lwe (default parameters of the backend)");
    o_sessions = app->add_option("-n,--sessions", sessions, "number of sessions");
    o_strategy = app->add_option("--strategy", strategy, "prover strategy");
    o_seed = app->add_option("--seed", seed, "root seed");
    o_first = app->add_option("--first-session", first_session, "first session id");
    o_timeout = app->add_option("--timeout-ms", timeout_ms, "per-message timeout");
    o_transcripts = app->add_option("--transcripts", transcripts, "transcript JSONL output");
    o_stats = app->add_option("--stats", stats, "stats JSON output");
    o_workers = app->add_option("-j,--workers", workers, "worker threads (0: all cores)");
    o_address = app->add_option("--address", address, "host:port");
    if (with_transport) o_transport = app->add_option("--transport", transport, "in_process | tcp | stdio");
  }

  qst::RunConfig resolve() const {
    qst::RunConfig c;
    if (!config.empty()) c = qst::run_config_from_json(read_json_file(config));
    if (o_backend->count()) c.params = qst::backend_from_string(backend) == qst::Backend::lwe ? qst::EntcfParams::lwe()
                                                                                               : qst::EntcfParams::ideal();
    if (o_sessions->count()) c.sessions = sessions;
    if (o_strategy->count()) c.strategy = strategy;
    if (o_seed->count()) c.seed = seed;
    if (o_first->count()) c.first_session = first_session;
    if (o_workers->count()) c.workers = workers;
    if (o_timeout->count()) c.timeout_ms = timeout_ms;
    if (o_transcripts->count()) c.transcript_path = transcripts;
    if (o_stats->count()) c.stats_path = stats;
    if (o_address->count()) c.address = address;
    if (o_transport && o_transport->count()) c.transport = qst::transport_from_string(transport);
    return c;
  }
};

void print_summary(const qst::RunStats& s, std::ostream& os) {
  os << "sessions " << s.sessions << ", errors " << s.errors << "\n";
  for (const auto& [flag, n] : s.flag_totals) os << "  " << flag << ": " << n << "\n";
  auto g = [&os](const char* name, const qst::GammaEstimate& e) {
    os << "  " << name << " = ";
    if (e.available)
      os << e.value << " +- " << 3.0 * e.sigma << " (3 sigma)\n";
    else
      os << "n/a\n";
  };
  g("gamma_P_hat", s.gammas.P);
  g("gamma_T_hat", s.gammas.T);
  g("gamma_B_hat", s.gammas.B);
  for (const auto& w : s.gammas.warnings) os << "  warning: " << w << "\n";
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw qst::ConfigError("bad grid value '" + item + "'");
    if (!(v >= 0.0 && v <= 1.0)) throw qst::ConfigError("grid values must lie in [0, 1]");
    grid.push_back(v);
  }
  if (grid.empty()) throw qst::ConfigError("sweep grid must be nonempty");
  return grid;
}

qst::LineChannel stdio_channel() { return qst::LineChannel(STDIN_FILENO, STDOUT_FILENO, false); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-testing protocol simulator and device analyzer"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run protocol sessions and report statistics");
  CommonFlags run_flags;
  run_flags.add(run, true);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "white-box analysis of an abstract device file");
  std::string device_path, report_path, report_format = "json";
  analyze->add_option("device", device_path, "device JSON")->required();
  analyze->add_option("-o,--output", report_path, "report output (default stdout)");
  analyze->add_option("--format", report_format, "json | csv")->check(CLI::IsMember({"json", "csv"}));

  // sweep
  auto* sweep = app.add_subcommand("sweep", "white-box and empirical gammas over a depolarizing grid");
  CommonFlags sweep_flags;
  sweep_flags.add(sweep, true);
  std::string grid_text = "0,0.1,0.2,0.3", csv_path;
  sweep->add_option("--grid", grid_text, "comma-separated p values");
  sweep->add_option("-o,--output", csv_path, "CSV output (default stdout)");

  // serve
  auto* serve = app.add_subcommand("serve", "verifier process over TCP or stdio");
  CommonFlags serve_flags;
  serve_flags.add(serve, false);
  bool serve_stdio = false;
  serve->add_flag("--stdio", serve_stdio, "serve consecutive sessions on stdin/stdout");

  // prove
  auto* prove = app.add_subcommand("prove", "prover process over TCP or stdio");
  CommonFlags prove_flags;
  prove_flags.add(prove, false);
  bool prove_stdio = false;
  prove->add_flag("--stdio", prove_stdio, "answer sessions arriving on stdin/stdout");

  // gen-device
  auto* gen = app.add_subcommand("gen-device", "write an abstract device file");
  double gen_p = 0.0;
  std::vector<std::string> flips;
  std::string gen_out;
  gen->add_option("-p,--depolarizing", gen_p, "depolarizing parameter of the honest device")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--flip", flips, "q1q2:f1f2, XOR outcome bits of one measurement (repeatable)");
  gen->add_option("-o,--output", gen_out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) {
      const auto cfg = run_flags.resolve();
      const auto result = qst::run_sessions(cfg);
      print_summary(result.stats, std::cerr);
      if (cfg.stats_path.empty()) std::cout << qst::stats_to_json(result.stats).dump(2) << "\n";
      return kExitOk;
    }

    if (*analyze) {
      qst::AbstractDevice d;
      try {
        d = qst::device_from_json(read_json_file(device_path));
      } catch (const nlohmann::json::exception& e) {
        throw qst::ValidationError(std::string("device file: ") + e.what());
      }
      const auto violations = qst::validate(d);
      if (!violations.empty()) {
        std::cerr << "invalid device:\n" << qst::format_violations(violations);
        return kExitValidation;
      }
      const auto report = qst::analyze(d);
      write_text(report_path,
                 report_format == "csv" ? qst::report_to_csv(report) : qst::report_to_json(report).dump(2) + "\n");
      return kExitOk;
    }

    if (*sweep) {
      const auto grid = parse_grid(grid_text);
      auto cfg = sweep_flags.resolve();
      if (!sweep_flags.o_sessions->count() && sweep_flags.config.empty()) cfg.sessions = 10000;
      write_text(csv_path, qst::sweep_to_csv(qst::sweep(grid, cfg)));
      return kExitOk;
    }

    if (*serve) {
      auto cfg = serve_flags.resolve();
      cfg.params.validate();
      const std::size_t limit = serve_flags.o_sessions->count() ? cfg.sessions : 0;
      std::vector<qst::TranscriptRecord> records;
      if (serve_stdio) {
        auto ch = stdio_channel();
        for (std::size_t k = 0; k < cfg.sessions; ++k)
          records.push_back(qst::serve_session(ch, cfg.params, cfg.first_session + k, cfg.seed, cfg.timeout_ms));
      } else {
        qst::VerifierServer::Options opt;
        opt.address = cfg.address;
        opt.params = cfg.params;
        opt.seed = cfg.seed;
        opt.first_session = cfg.first_session;
        opt.max_sessions = limit;
        opt.timeout_ms = cfg.timeout_ms;
        std::ofstream live;
        if (!cfg.transcript_path.empty()) live.open(cfg.transcript_path);
        qst::VerifierServer server(opt, [&](const qst::TranscriptRecord& r) {
          records.push_back(r);
          if (live) live << qst::transcript_to_json(r).dump() << "\n" << std::flush;
        });
        std::cerr << "listening on port " << server.port() << "\n";
        server.run();
        records = qst::detail::sorted_records(std::move(records));
      }
      if (serve_stdio && !cfg.transcript_path.empty()) {
        std::ofstream os(cfg.transcript_path);
        qst::write_transcripts(records, os);
      }
      const auto stats = qst::compute_stats(records);
      print_summary(stats, std::cerr);
      if (!cfg.stats_path.empty()) write_text(cfg.stats_path, qst::stats_to_json(stats).dump(2) + "\n");
      return kExitOk;
    }

    if (*prove) {
      auto cfg = prove_flags.resolve();
      const auto factory = qst::parse_strategy(cfg.strategy);
      const auto oracle = qst::replay_oracle(cfg.seed);
      if (prove_stdio) {
        auto ch = stdio_channel();
        const auto n = qst::prove_stream(ch, factory, oracle, cfg.seed, cfg.timeout_ms);
        std::cerr << "answered " << n << " sessions\n";
      } else {
        const auto verdicts = qst::connect_prover(cfg.address, factory, oracle, cfg.seed, cfg.sessions, cfg.timeout_ms);
        std::map<std::string, std::size_t> tally;
        for (const auto& v : verdicts) ++tally[v];
        for (const auto& [v, n] : tally) std::cerr << v << ": " << n << "\n";
      }
      return kExitOk;
    }

    if (*gen) {
      auto d = qst::from_honest(gen_p);
      for (const auto& f : flips) {
        if (f.size() != 5 || f[2] != ':') throw qst::ConfigError("--flip expects q1q2:f1f2, got '" + f + "'");
        auto bit = [&f](std::size_t i) {
          if (f[i] != '0' && f[i] != '1') throw qst::ConfigError("--flip expects bits, got '" + f + "'");
          return f[i] - '0';
        };
        d = qst::flip_outcomes(d, bit(0), bit(1), bit(3), bit(4));
      }
      write_text(gen_out, qst::device_to_json(d).dump(2) + "\n");
      return kExitOk;
    }
  } catch (const qst::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const qst::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const qst::StructuralError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
