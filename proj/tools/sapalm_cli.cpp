// Copyright 2026 The SAPALM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Command-line front end: `run` executes one configured experiment and
// writes its artifacts, `speedup` builds a worker-scaling table, `verify`
// runs the self-check suites.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sapalm/harness.hpp"
#include "sapalm/verify.hpp"

namespace {

// Shared flags: config file, overrides, and the common shorthands.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  unsigned threads = 0;
  std::uint64_t seed = 0;
  std::string mode;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "config file with key = value lines");
    cmd->add_option("--set", overrides,
                    "override a config key, e.g. --set n=1000 (repeatable)");
    cmd->add_option("--threads", threads,
                    "shorthand for --set workers=<count>");
    cmd->add_option("--seed", seed, "shorthand for --set seed=<value>");
    cmd->add_option("--mode", mode, "shorthand for --set mode=<value>");
  }

  sapalm::ExperimentConfig build(const CLI::App* cmd) const {
    sapalm::ExperimentConfig cfg;
    if (!config_path.empty())
      cfg = sapalm::ExperimentConfig::from_file(config_path);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw sapalm::ParameterError("--set expects key=value, got '" + kv +
                                     "'");
      cfg.set(sapalm::harness_detail::trim(kv.substr(0, eq)),
              sapalm::harness_detail::trim(kv.substr(eq + 1)));
    }
    if (cmd->count("--threads") > 0) cfg.workers = threads;
    if (cmd->count("--seed") > 0) cfg.seed = seed;
    if (cmd->count("--mode") > 0) cfg.mode = mode;
    cfg.validate();
    return cfg;
  }
};

int do_run(const sapalm::ExperimentConfig& cfg, const std::string& out_dir) {
  const auto art = sapalm::run_experiment(cfg, out_dir);
  std::printf("wrote %s\n", art.trace_csv.string().c_str());
  std::printf("wrote %s\n", art.run_meta.string().c_str());
  if (!art.data_bin.empty())
    std::printf("wrote %s\n", art.data_bin.string().c_str());
  if (art.workers_capped)
    std::printf("note: workers capped by SAPALM_MAX_THREADS\n");
  const auto& s = art.summary;
  std::printf(
      "%llu updates in %.3f s (%.0f/s), max observed delay %u%s\n",
      static_cast<unsigned long long>(s.total_updates), s.elapsed_s,
      s.updates_per_s, s.max_observed_delay,
      s.delay_exceeded_tau ? " (exceeded the stepsize bound tau)" : "");
  if (s.aborted) {
    std::fprintf(stderr, "run aborted: %s\n", s.abort_reason.c_str());
    return 1;
  }
  return 0;
}

int do_speedup(const sapalm::ExperimentConfig& cfg, const std::string& out_dir,
               const std::vector<unsigned>& workers, int reps,
               const std::vector<std::string>& refs) {
  sapalm::SpeedupOptions opt;
  if (!workers.empty()) opt.worker_counts = workers;
  opt.repetitions = reps;
  for (const std::string& r : refs) {
    const auto eq = r.find('=');
    if (eq == std::string::npos)
      throw sapalm::ParameterError(
          "--ref expects workers=value, e.g. --ref 2=1.98, got '" + r + "'");
    opt.references.emplace_back(
        static_cast<unsigned>(std::stoul(r.substr(0, eq))),
        std::stod(r.substr(eq + 1)));
  }

  const auto report = sapalm::speedup_table(cfg, opt);
  std::fputs(sapalm::format_speedup_table(report).c_str(), stdout);

  std::filesystem::create_directories(out_dir);
  const auto csv = std::filesystem::path(out_dir) / "speedup.csv";
  std::ofstream out(csv);
  if (!out) throw sapalm::IoError("cannot write " + csv.string());
  sapalm::write_speedup_csv(out, report);
  std::printf("wrote %s\n", csv.string().c_str());
  return report.complete ? 0 : 1;
}

int do_verify(const std::string& suite) {
  const auto results = sapalm::verify::run_suite(suite);
  int failures = 0;
  for (const auto& r : results) {
    std::puts(sapalm::verify::format_check(r).c_str());
    if (!r.pass) ++failures;
  }
  std::printf("%zu checks, %d failed\n", results.size(), failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shared-memory asynchronous block proximal solver"};
  app.require_subcommand(1);

  auto* run_cmd =
      app.add_subcommand("run", "run one experiment and write its artifacts");
  ConfigFlags run_flags;
  run_flags.attach(run_cmd);
  std::string run_out = "out/run";
  run_cmd->add_option("--out", run_out, "output directory");

  auto* speed_cmd = app.add_subcommand(
      "speedup", "time the async engine across worker counts");
  ConfigFlags speed_flags;
  speed_flags.attach(speed_cmd);
  std::string speed_out = "out/speedup";
  std::vector<unsigned> speed_workers;
  int speed_reps = 3;
  std::vector<std::string> speed_refs;
  speed_cmd->add_option("--out", speed_out, "output directory");
  speed_cmd->add_option("--workers", speed_workers,
                        "worker counts to time (1 is always included)");
  speed_cmd->add_option("--reps", speed_reps,
                        "timed repetitions per count (median is reported)");
  speed_cmd->add_option("--ref", speed_refs,
                        "reference speedup to print, workers=value "
                        "(repeatable)");

  auto* verify_cmd =
      app.add_subcommand("verify", "run the self-check suites");
  std::string suite = "all";
  verify_cmd->add_option("--suite", suite,
                         "suite name (prox-oracle, gradient-fd, "
                         "engine-equivalence, sync-descent, lyapunov, "
                         "rate-slope, noise-regimes, stale-read-stress, "
                         "horizon-sampler, minibatch, all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return do_run(run_flags.build(run_cmd), run_out);
    if (speed_cmd->parsed())
      return do_speedup(speed_flags.build(speed_cmd), speed_out, speed_workers,
                        speed_reps, speed_refs);
    if (verify_cmd->parsed()) return do_verify(suite);
  } catch (const sapalm::ParameterError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const sapalm::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const sapalm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 3;
  }
  return 0;
}
