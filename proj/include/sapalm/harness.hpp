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
// Configuration-driven experiment runner: a flat key=value config maps onto
// a factorization problem plus engine settings, runs produce a trace CSV and
// a metadata file sufficient to reproduce them, and a timing helper builds
// worker-scaling tables from repeated runs.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sapalm/block_vector.hpp"
#include "sapalm/engine.hpp"
#include "sapalm/error.hpp"
#include "sapalm/factorization.hpp"
#include "sapalm/rng.hpp"
#include "sapalm/schedules.hpp"
#include "sapalm/trace.hpp"
#include "sapalm/version.hpp"

namespace sapalm {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  // Problem. kappa <= 0 resolves to 5 * lambda; data_seed 0 resolves to
  // seed; a nonempty data_file loads the matrix instead of generating it.
  std::string problem = "spca";  // spca | firm-pca
  std::size_t n = 500;
  std::size_t d = 5;
  double lambda = 0.5;
  double kappa = 0.0;
  double mu = 0.1;
  double rho = 1.1;
  std::uint64_t data_seed = 0;
  std::string data_file;
  bool save_data = false;

  // Engine.
  std::string mode = "sync";          // sync | sim-async | async
  std::string selection = "uniform";  // uniform | dedicated-cyclic
  unsigned workers = 1;
  std::uint64_t epochs = 50;
  std::uint64_t total_updates = 0;  // 0 resolves from epochs
  std::uint64_t checkpoint_stride = 0;  // 0 = once per epoch
  std::uint64_t seed = 1;

  // Stepsizes.
  std::string regime = "summable";  // summable | alpha-diminishing | smooth-sqrt
  double a = 2.0;
  double alpha = 0.5;
  unsigned tau = 0;

  // Noise.
  std::string noise = "none";
  double sigma0 = 0.0;
  double noise_alpha = 0.5;
  double summable_exponent = 1.5;
  std::size_t batch_base = 1;

  // Delays (delay_tau 0 resolves to tau for kinds other than none).
  std::string delay = "none";  // none | constant | iid-uniform | lagged-block
  unsigned delay_tau = 0;
  std::size_t delay_block = 0;

  // Diagnostics. real_time switches the trace's wall_time_s column to the
  // measured clock for single-threaded modes; async runs always use it.
  bool real_time = false;
  bool faithful_stationarity = false;
  bool record_update_log = false;
  unsigned monitor_poll_us = 200;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  ExperimentConfig resolved() const;
  std::string serialize() const;
  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_string(const std::string& text);
};

namespace harness_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key,
                               const std::string& value) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != value.size() || value.empty() || value[0] == '-')
    throw ParameterError("config: key '" + key +
                         "' expects a nonnegative integer, got '" + value +
                         "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != value.size() || value.empty())
    throw ParameterError("config: key '" + key + "' expects a number, got '" +
                         value + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on")
    return true;
  if (value == "false" || value == "0" || value == "no" || value == "off")
    return false;
  throw ParameterError("config: key '" + key +
                       "' expects true or false, got '" + value + "'");
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace harness_detail

inline void ExperimentConfig::set(const std::string& key,
                                  const std::string& value) {
  using harness_detail::parse_bool;
  using harness_detail::parse_double;
  using harness_detail::parse_u64;
  if (key == "problem") problem = value;
  else if (key == "n") n = static_cast<std::size_t>(parse_u64(key, value));
  else if (key == "d") d = static_cast<std::size_t>(parse_u64(key, value));
  else if (key == "lambda") lambda = parse_double(key, value);
  else if (key == "kappa") kappa = parse_double(key, value);
  else if (key == "mu") mu = parse_double(key, value);
  else if (key == "rho") rho = parse_double(key, value);
  else if (key == "data-seed") data_seed = parse_u64(key, value);
  else if (key == "data-file") data_file = value;
  else if (key == "save-data") save_data = parse_bool(key, value);
  else if (key == "mode") mode = value;
  else if (key == "selection") selection = value;
  else if (key == "workers")
    workers = static_cast<unsigned>(parse_u64(key, value));
  else if (key == "epochs") epochs = parse_u64(key, value);
  else if (key == "total-updates") total_updates = parse_u64(key, value);
  else if (key == "checkpoint-stride") checkpoint_stride = parse_u64(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "regime") regime = value;
  else if (key == "a") a = parse_double(key, value);
  else if (key == "alpha") alpha = parse_double(key, value);
  else if (key == "tau") tau = static_cast<unsigned>(parse_u64(key, value));
  else if (key == "noise") noise = value;
  else if (key == "sigma0") sigma0 = parse_double(key, value);
  else if (key == "noise-alpha") noise_alpha = parse_double(key, value);
  else if (key == "summable-exponent")
    summable_exponent = parse_double(key, value);
  else if (key == "batch-base")
    batch_base = static_cast<std::size_t>(parse_u64(key, value));
  else if (key == "delay") delay = value;
  else if (key == "delay-tau")
    delay_tau = static_cast<unsigned>(parse_u64(key, value));
  else if (key == "delay-block")
    delay_block = static_cast<std::size_t>(parse_u64(key, value));
  else if (key == "real-time") real_time = parse_bool(key, value);
  else if (key == "faithful-stationarity")
    faithful_stationarity = parse_bool(key, value);
  else if (key == "record-update-log")
    record_update_log = parse_bool(key, value);
  else if (key == "monitor-poll-us")
    monitor_poll_us = static_cast<unsigned>(parse_u64(key, value));
  else
    throw ParameterError("config: unknown key '" + key +
                         "' (see the sample configs for the full key list)");
}

// One update touches a whole block under uniform selection and a single
// coordinate under the dedicated-cyclic sweep, so an epoch is m = 2 updates
// in the first case and every coordinate once, 2 * d * n, in the second.
// This mirrors how the engines count k.
inline std::uint64_t config_updates_per_epoch(const ExperimentConfig& cfg) {
  if (cfg.selection == "uniform") return 2;
  return static_cast<std::uint64_t>(2 * cfg.d * cfg.n);
}

inline ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig out = *this;
  if (out.kappa <= 0.0) out.kappa = 5.0 * out.lambda;
  if (out.data_seed == 0) out.data_seed = out.seed;
  if (out.delay != "none" && out.delay_tau == 0) out.delay_tau = out.tau;
  if (out.total_updates == 0)
    out.total_updates = out.epochs * config_updates_per_epoch(out);
  return out;
}

inline void ExperimentConfig::validate() const {
  if (problem != "spca" && problem != "firm-pca")
    throw ParameterError("config: problem must be spca or firm-pca, got '" +
                         problem + "'");
  if (n == 0 || d == 0)
    throw ParameterError("config: n and d must be positive");
  if (lambda < 0.0) throw ParameterError("config: lambda must be >= 0");
  if (mu < 0.0) throw ParameterError("config: mu must be >= 0");
  if (problem == "firm-pca") {
    const double k_eff = kappa <= 0.0 ? 5.0 * lambda : kappa;
    if (!(lambda < k_eff))
      throw ParameterError(
          "config: firm-pca needs lambda < kappa (kappa defaults to "
          "5*lambda)");
  }
  if (mode != "sync" && mode != "sim-async" && mode != "async")
    throw ParameterError("config: mode must be sync, sim-async or async, got '" +
                         mode + "'");
  if (selection != "uniform" && selection != "dedicated-cyclic" &&
      selection != "cyclic")
    throw ParameterError(
        "config: selection must be uniform or dedicated-cyclic, got '" +
        selection + "'");
  if (workers == 0) throw ParameterError("config: workers must be >= 1");
  if (workers > 1 && mode != "async")
    throw ParameterError("config: workers > 1 requires mode = async");
  if (epochs == 0 && total_updates == 0)
    throw ParameterError("config: set epochs or total-updates to a positive value");
  if (regime != "summable" && regime != "alpha-diminishing" &&
      regime != "smooth-sqrt")
    throw ParameterError(
        "config: regime must be summable, alpha-diminishing or smooth-sqrt, "
        "got '" + regime + "'");
  if (!(a > 1.0))
    throw ParameterError("config: stepsize parameter a must be > 1");
  noise_kind_from_string(noise);  // throws with the offending value if bad
  if (delay != "none" && delay != "constant" && delay != "iid-uniform" &&
      delay != "lagged-block")
    throw ParameterError(
        "config: delay must be none, constant, iid-uniform or lagged-block, "
        "got '" + delay + "'");
  if (delay != "none" && mode != "sim-async")
    throw ParameterError(
        "config: delay schedules script staleness and need mode = sim-async; "
        "async runs take delays from real thread interleaving");
  if (delay != "none" && delay_tau > tau)
    throw ParameterError(
        "config: delay-tau exceeds tau; raise tau so the stepsize bound "
        "covers the scripted delays");
}

inline ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = harness_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError("config line " + std::to_string(lineno) +
                           ": expected 'key = value', got '" + line + "'");
    const std::string key = harness_detail::trim(line.substr(0, eq));
    const std::string value = harness_detail::trim(line.substr(eq + 1));
    cfg.set(key, value);
  }
  return cfg;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

inline std::string ExperimentConfig::serialize() const {
  using harness_detail::fmt_double;
  std::ostringstream out;
  out << "problem = " << problem << "\n";
  out << "n = " << n << "\n";
  out << "d = " << d << "\n";
  out << "lambda = " << fmt_double(lambda) << "\n";
  out << "kappa = " << fmt_double(kappa) << "\n";
  out << "mu = " << fmt_double(mu) << "\n";
  out << "rho = " << fmt_double(rho) << "\n";
  out << "data-seed = " << data_seed << "\n";
  if (!data_file.empty()) out << "data-file = " << data_file << "\n";
  out << "save-data = " << (save_data ? "true" : "false") << "\n";
  out << "mode = " << mode << "\n";
  out << "selection = " << selection << "\n";
  out << "workers = " << workers << "\n";
  out << "epochs = " << epochs << "\n";
  out << "total-updates = " << total_updates << "\n";
  out << "checkpoint-stride = " << checkpoint_stride << "\n";
  out << "seed = " << seed << "\n";
  out << "regime = " << regime << "\n";
  out << "a = " << fmt_double(a) << "\n";
  out << "alpha = " << fmt_double(alpha) << "\n";
  out << "tau = " << tau << "\n";
  out << "noise = " << noise << "\n";
  out << "sigma0 = " << fmt_double(sigma0) << "\n";
  out << "noise-alpha = " << fmt_double(noise_alpha) << "\n";
  out << "summable-exponent = " << fmt_double(summable_exponent) << "\n";
  out << "batch-base = " << batch_base << "\n";
  out << "delay = " << delay << "\n";
  out << "delay-tau = " << delay_tau << "\n";
  out << "delay-block = " << delay_block << "\n";
  out << "real-time = " << (real_time ? "true" : "false") << "\n";
  out << "faithful-stationarity = " << (faithful_stationarity ? "true" : "false")
      << "\n";
  out << "record-update-log = " << (record_update_log ? "true" : "false")
      << "\n";
  out << "monitor-poll-us = " << monitor_poll_us << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Config -> engine structures
// ---------------------------------------------------------------------------

inline RunMode run_mode_from_string(const std::string& s) {
  if (s == "sync") return RunMode::kSync;
  if (s == "sim-async") return RunMode::kSimAsync;
  if (s == "async") return RunMode::kAsync;
  throw ParameterError("unknown mode: " + s);
}

inline BlockSelection selection_from_string(const std::string& s) {
  if (s == "uniform") return BlockSelection::kUniform;
  if (s == "dedicated-cyclic" || s == "cyclic")
    return BlockSelection::kDedicatedCyclic;
  throw ParameterError("unknown selection: " + s);
}

inline StepsizeRegime regime_from_string(const std::string& s) {
  if (s == "summable") return StepsizeRegime::kSummable;
  if (s == "alpha-diminishing") return StepsizeRegime::kAlphaDiminishing;
  if (s == "smooth-sqrt") return StepsizeRegime::kSmoothSqrt;
  throw ParameterError("unknown stepsize regime: " + s);
}

// Resolved config -> RunConfig. Expects cfg = config.resolved().
inline RunConfig build_run_config(const ExperimentConfig& cfg) {
  RunConfig rc;
  rc.mode = run_mode_from_string(cfg.mode);
  rc.selection = selection_from_string(cfg.selection);
  rc.workers = cfg.workers;
  rc.total_updates = cfg.total_updates;
  rc.checkpoint_stride = cfg.checkpoint_stride;
  rc.seed = cfg.seed;
  rc.policy.regime = regime_from_string(cfg.regime);
  rc.policy.a = cfg.a;
  rc.policy.alpha = cfg.alpha;
  rc.policy.tau = cfg.tau;
  rc.noise.kind = noise_kind_from_string(cfg.noise);
  rc.noise.sigma0 = cfg.sigma0;
  rc.noise.alpha = cfg.noise_alpha;
  rc.noise.summable_exponent = cfg.summable_exponent;
  rc.noise.batch_base = cfg.batch_base;
  if (cfg.delay == "constant")
    rc.delays = DelaySchedule::constant(cfg.delay_tau);
  else if (cfg.delay == "iid-uniform")
    rc.delays = DelaySchedule::iid_uniform(
        cfg.delay_tau, hash_mix(cfg.seed, stream_tag::kDelay));
  else if (cfg.delay == "lagged-block")
    rc.delays = DelaySchedule::lagged_block(cfg.delay_tau, cfg.delay_block);
  rc.faithful_stationarity = cfg.faithful_stationarity;
  rc.record_update_log = cfg.record_update_log;
  rc.monitor_poll_us = cfg.monitor_poll_us;
  // Single-threaded modes default to a deterministic virtual clock so the
  // trace is byte-identical across runs; async timing is always real.
  rc.virtual_time = rc.mode != RunMode::kAsync && !cfg.real_time;
  return rc;
}

// Builds the configured problem and passes it to `fn` (the two problem
// variants are distinct types). Returns whatever `fn` returns.
template <class Fn>
auto with_configured_problem(const ExperimentConfig& cfg,
                             std::shared_ptr<const FactorizationData> data,
                             Fn&& fn) {
  if (cfg.problem == "spca")
    return fn(make_sparse_pca(std::move(data), cfg.d, cfg.lambda, cfg.rho));
  if (cfg.problem == "firm-pca")
    return fn(make_firm_pca(std::move(data), cfg.d, cfg.lambda, cfg.kappa,
                            cfg.mu, cfg.rho));
  throw ParameterError("config: problem must be spca or firm-pca, got '" +
                       cfg.problem + "'");
}

inline std::shared_ptr<const FactorizationData> load_or_generate_data(
    const ExperimentConfig& cfg) {
  if (!cfg.data_file.empty()) {
    auto data = std::make_shared<const FactorizationData>(
        FactorizationData::load(cfg.data_file));
    if (data->n != cfg.n)
      throw ParameterError(
          "config: data file holds an n = " + std::to_string(data->n) +
          " matrix but the config says n = " + std::to_string(cfg.n) +
          "; set n to match or drop data-file");
    return data;
  }
  return std::make_shared<const FactorizationData>(
      FactorizationData::generate(cfg.n, cfg.data_seed));
}

// ---------------------------------------------------------------------------
// Worker-count limits
// ---------------------------------------------------------------------------

// Physical cores from /proc/cpuinfo: distinct (physical id, core id) pairs.
// Falls back to the scheduler's logical count when that is unavailable.
inline unsigned detect_physical_cores() {
  std::ifstream in("/proc/cpuinfo");
  std::vector<std::pair<long, long>> seen;
  long phys = -1, core = -1;
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      if (phys >= 0 || core >= 0) {
        const std::pair<long, long> id{phys, core};
        if (std::find(seen.begin(), seen.end(), id) == seen.end())
          seen.push_back(id);
      }
      phys = core = -1;
      continue;
    }
    const std::string key = harness_detail::trim(line.substr(0, colon));
    const std::string value = harness_detail::trim(line.substr(colon + 1));
    if (key == "physical id") phys = std::atol(value.c_str());
    if (key == "core id") core = std::atol(value.c_str());
  }
  if (phys >= 0 || core >= 0) {
    const std::pair<long, long> id{phys, core};
    if (std::find(seen.begin(), seen.end(), id) == seen.end())
      seen.push_back(id);
  }
  if (!seen.empty()) return static_cast<unsigned>(seen.size());
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

// CI cap on spawned workers; 0 means no cap.
inline unsigned worker_thread_cap() {
  const char* env = std::getenv("SAPALM_MAX_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  const long v = std::atol(env);
  return v <= 0 ? 0 : static_cast<unsigned>(v);
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

inline void write_trace_csv(std::ostream& out, const RunTrace& trace) {
  out << "k,epoch,wall_time_s,objective,stationarity,lyapunov,max_delay,c_k\n";
  char buf[256];
  for (const auto& cp : trace.checkpoints) {
    std::snprintf(buf, sizeof(buf),
                  "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%u,%.17g\n",
                  static_cast<unsigned long long>(cp.k), cp.epoch,
                  cp.wall_time_s, cp.objective, cp.stationarity, cp.lyapunov,
                  cp.max_delay, cp.c_k);
    out << buf;
  }
  if (trace.summary.aborted)
    out << "# ERROR " << trace.summary.abort_reason << "\n";
}

inline void write_run_meta(std::ostream& out, const ExperimentConfig& resolved,
                           const RunTrace& trace) {
  out << "# resolved configuration (re-runnable as a config file)\n";
  out << resolved.serialize();
  out << "\n# run summary\n";
  out << "# library-version = " << kVersionString << "\n";
  const auto& s = trace.summary;
  out << "# total-updates-completed = " << s.total_updates << "\n";
  out << "# elapsed-s = " << harness_detail::fmt_double(s.elapsed_s) << "\n";
  out << "# updates-per-s = " << harness_detail::fmt_double(s.updates_per_s)
      << "\n";
  out << "# updates-per-epoch = " << trace.updates_per_epoch << "\n";
  out << "# max-observed-delay = " << s.max_observed_delay << "\n";
  out << "# delay-exceeded-tau = " << (s.delay_exceeded_tau ? "true" : "false")
      << "\n";
  out << "# approximate-checkpoints = "
      << (trace.approximate_checkpoints ? "true" : "false") << "\n";
  out << "# aborted = " << (s.aborted ? "true" : "false") << "\n";
  if (s.aborted) out << "# abort-reason = " << s.abort_reason << "\n";
  if (!s.worker_block_map.empty())
    out << "# worker-block-map = " << s.worker_block_map << "\n";
  if (resolved.noise == "minibatch") {
    NoiseModel model;
    model.kind = NoiseKind::kMinibatch;
    model.alpha = resolved.noise_alpha;
    model.batch_base = resolved.batch_base;
    out << "# minibatch-sizes =";
    const std::uint64_t total = resolved.total_updates;
    const std::uint64_t points[] = {0, total / 4, total / 2, 3 * total / 4,
                                    total == 0 ? 0 : total - 1};
    for (std::uint64_t k : points)
      out << " k" << k << ":" << minibatch_size(model, k);
    out << "\n";
  }
}

struct RunArtifacts {
  std::filesystem::path trace_csv;
  std::filesystem::path run_meta;
  std::filesystem::path data_bin;  // empty unless save-data was set
  RunSummary summary;
  bool workers_capped = false;
};

// Runs one configured experiment and writes trace.csv plus run_meta.txt
// into out_dir (created if missing). An aborted run still flushes both
// files, with the error marker in the CSV; the summary reports the abort.
inline RunArtifacts run_experiment(const ExperimentConfig& raw,
                                   const std::filesystem::path& out_dir) {
  raw.validate();
  ExperimentConfig cfg = raw.resolved();

  const unsigned cap = worker_thread_cap();
  bool capped = false;
  if (cap > 0 && cfg.workers > cap) {
    cfg.workers = cap;
    capped = true;
  }

  std::filesystem::create_directories(out_dir);
  auto data = load_or_generate_data(cfg);

  RunArtifacts art;
  art.workers_capped = capped;
  if (cfg.save_data) {
    art.data_bin = out_dir / "data.bin";
    data->save(art.data_bin.string());
  }

  RunConfig rc = build_run_config(cfg);
  RunTrace trace = with_configured_problem(cfg, data, [&](const auto& prob) {
    BlockVector x0 =
        initial_factorization_point(prob.d(), prob.n(), cfg.seed);
    auto res = run(prob, x0, rc);
    return std::move(res.trace);
  });

  art.trace_csv = out_dir / "trace.csv";
  {
    std::ofstream out(art.trace_csv);
    if (!out) throw IoError("cannot write " + art.trace_csv.string());
    write_trace_csv(out, trace);
  }
  art.run_meta = out_dir / "run_meta.txt";
  {
    std::ofstream out(art.run_meta);
    if (!out) throw IoError("cannot write " + art.run_meta.string());
    if (capped)
      out << "# workers capped to " << cfg.workers
          << " by SAPALM_MAX_THREADS\n";
    write_run_meta(out, cfg, trace);
  }
  art.summary = trace.summary;
  return art;
}

// ---------------------------------------------------------------------------
// Timing and speedup tables
// ---------------------------------------------------------------------------

struct SpeedupRow {
  unsigned workers = 0;
  double seconds = 0.0;       // median over repetitions
  double speedup = 0.0;       // baseline seconds / this row's seconds
  double reference = 0.0;     // external comparison value, 0 when absent
};

struct SpeedupReport {
  std::vector<SpeedupRow> rows;
  bool complete = true;       // false when a constituent run failed
  std::string error;
};

struct SpeedupOptions {
  std::vector<unsigned> worker_counts{1, 2, 4};
  int repetitions = 3;
  bool discard_warmup = true;
  // Reference speedups to print next to measured ones, matched by worker
  // count; entries are (workers, reference value).
  std::vector<std::pair<unsigned, double>> references;
};

// Median wall time of `reps` timed runs (plus one discarded warmup) of the
// configured problem at a fixed worker count. Timing wraps the engine call
// only; data generation and output writing sit outside the clock.
template <class P>
double median_run_seconds(const P& prob, const RunConfig& rc,
                          const BlockVector& x0, int reps, bool warmup) {
  std::vector<double> times;
  const int total = reps + (warmup ? 1 : 0);
  for (int i = 0; i < total; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    auto res = run(prob, x0, rc);
    const auto t1 = std::chrono::steady_clock::now();
    if (res.trace.summary.aborted)
      throw EngineError("timing run aborted: " +
                        res.trace.summary.abort_reason);
    if (warmup && i == 0) continue;
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

// Scaling table over worker counts. All runs share the problem, data, seed
// and epoch target; every count runs through the same async code path so
// the single-worker baseline pays the same synchronization costs. A failed
// run stops the sweep but keeps the rows measured so far.
inline SpeedupReport speedup_table(const ExperimentConfig& raw,
                                   const SpeedupOptions& opt = {}) {
  raw.validate();
  ExperimentConfig cfg = raw.resolved();
  cfg.mode = "async";
  cfg.real_time = true;

  const unsigned cap = worker_thread_cap();
  auto data = load_or_generate_data(cfg);
  SpeedupReport report;

  // The single-worker baseline leads the sweep so every later row can be
  // expressed as baseline seconds / row seconds; it runs through the same
  // async code path and pays the same synchronization costs.
  std::vector<unsigned> counts = opt.worker_counts;
  if (std::find(counts.begin(), counts.end(), 1u) == counts.end())
    counts.insert(counts.begin(), 1u);
  std::sort(counts.begin(), counts.end());
  counts.erase(std::unique(counts.begin(), counts.end()), counts.end());

  with_configured_problem(cfg, data, [&](const auto& prob) {
    BlockVector x0 =
        initial_factorization_point(prob.d(), prob.n(), cfg.seed);
    double baseline = 0.0;
    for (unsigned p : counts) {
      if (cap > 0 && p > cap) continue;
      ExperimentConfig ecfg = cfg;
      ecfg.workers = p;
      RunConfig rc = build_run_config(ecfg);
      // Checkpoints off: the table times raw update throughput.
      rc.checkpoint_objective = false;
      rc.checkpoint_stationarity = false;
      rc.checkpoint_stride = rc.total_updates;
      SpeedupRow row;
      row.workers = p;
      try {
        row.seconds = median_run_seconds(prob, rc, x0, opt.repetitions,
                                         opt.discard_warmup);
      } catch (const Error& e) {
        report.complete = false;
        report.error = e.what();
        return 0;
      }
      if (p == 1) baseline = row.seconds;
      row.speedup = baseline > 0.0 ? baseline / row.seconds : 0.0;
      for (const auto& ref : opt.references)
        if (ref.first == p) row.reference = ref.second;
      report.rows.push_back(row);
    }
    return 0;
  });
  return report;
}

inline void write_speedup_csv(std::ostream& out, const SpeedupReport& report) {
  out << "workers,seconds,speedup,reference\n";
  char buf[160];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g,%.17g\n", r.workers,
                  r.seconds, r.speedup, r.reference);
    out << buf;
  }
  if (!report.complete) out << "# ERROR " << report.error << "\n";
}

inline std::string format_speedup_table(const SpeedupReport& report) {
  std::ostringstream out;
  out << "workers   seconds      speedup   reference\n";
  char buf[160];
  for (const auto& r : report.rows) {
    if (r.reference > 0.0)
      std::snprintf(buf, sizeof(buf), "%7u %9.4f %12.4f %11.4f\n", r.workers,
                    r.seconds, r.speedup, r.reference);
    else
      std::snprintf(buf, sizeof(buf), "%7u %9.4f %12.4f %11s\n", r.workers,
                    r.seconds, r.speedup, "-");
    out << buf;
  }
  if (!report.complete) out << "(incomplete: " << report.error << ")\n";
  return out.str();
}

}  // namespace sapalm
