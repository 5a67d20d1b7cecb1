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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sapalm/harness.hpp"
#include "sapalm/verify.hpp"

using namespace sapalm;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string field;
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("config text round trips through serialize and parse") {
  ExperimentConfig cfg;
  CHECK(ExperimentConfig::from_string(cfg.serialize()).serialize() ==
        cfg.serialize());

  cfg.set("problem", "firm-pca");
  cfg.set("lambda", "0.12345678901234567");
  cfg.set("kappa", "3.5");
  cfg.set("mode", "sim-async");
  cfg.set("tau", "4");
  cfg.set("delay", "iid-uniform");
  cfg.set("delay-tau", "3");
  cfg.set("noise", "gaussian-diminishing");
  cfg.set("sigma0", "0.001953125");
  cfg.set("save-data", "true");
  cfg.set("data-file", "some/matrix.bin");
  cfg.set("faithful-stationarity", "on");
  const std::string text = cfg.serialize();
  CHECK(ExperimentConfig::from_string(text).serialize() == text);
  CHECK(cfg.faithful_stationarity);
}

TEST_CASE("unknown keys and bad values produce actionable errors") {
  ExperimentConfig cfg;
  CHECK_THROWS_AS(cfg.set("no-such-key", "1"), ParameterError);
  CHECK_THROWS_WITH(cfg.set("no-such-key", "1"),
                    ContainsSubstring("no-such-key"));
  CHECK_THROWS_WITH(cfg.set("n", "abc"), ContainsSubstring("'n'"));
  CHECK_THROWS_WITH(cfg.set("workers", "-3"), ContainsSubstring("nonnegative"));
  CHECK_THROWS_WITH(cfg.set("lambda", "half"), ContainsSubstring("number"));
  CHECK_THROWS_WITH(cfg.set("save-data", "maybe"),
                    ContainsSubstring("true or false"));
}

TEST_CASE("config files accept comments and report line numbers") {
  const auto cfg = ExperimentConfig::from_string(
      "# a comment line\n"
      "n = 40\n"
      "\n"
      "mode = sim-async  # trailing comment\n");
  CHECK(cfg.n == 40);
  CHECK(cfg.mode == "sim-async");

  CHECK_THROWS_WITH(ExperimentConfig::from_string("n = 40\n\nnot an entry\n"),
                    ContainsSubstring("line 3"));
  CHECK_THROWS_AS(ExperimentConfig::from_file("/no/such/config.cfg"), IoError);
}

TEST_CASE("resolution fills the derived values") {
  ExperimentConfig cfg;
  cfg.lambda = 0.3;
  cfg.seed = 9;
  cfg.tau = 4;
  cfg.delay = "constant";
  cfg.epochs = 3;
  const auto r = cfg.resolved();
  CHECK(r.kappa == 1.5);       // 5 * lambda
  CHECK(r.data_seed == 9);     // falls back to the run seed
  CHECK(r.delay_tau == 4);     // falls back to tau
  CHECK(r.total_updates == 6); // 3 epochs of 2 block updates

  // Explicit settings are left alone.
  cfg.kappa = 2.0;
  cfg.data_seed = 77;
  cfg.delay_tau = 2;
  cfg.total_updates = 11;
  const auto r2 = cfg.resolved();
  CHECK(r2.kappa == 2.0);
  CHECK(r2.data_seed == 77);
  CHECK(r2.delay_tau == 2);
  CHECK(r2.total_updates == 11);

  // Cyclic epochs count coordinates, matching the engine's bookkeeping.
  ExperimentConfig cyc;
  cyc.selection = "dedicated-cyclic";
  cyc.n = 10;
  cyc.d = 2;
  cyc.epochs = 3;
  CHECK(config_updates_per_epoch(cyc) == 40);
  CHECK(cyc.resolved().total_updates == 120);
  ExperimentConfig uni;
  CHECK(config_updates_per_epoch(uni) == 2);
}

TEST_CASE("config validation catches conflicting settings") {
  auto expect_throw = [](ExperimentConfig cfg, const std::string& fragment) {
    CHECK_THROWS_AS(cfg.validate(), ParameterError);
    CHECK_THROWS_WITH(cfg.validate(), ContainsSubstring(fragment));
  };

  {
    ExperimentConfig cfg;
    cfg.problem = "lasso";
    expect_throw(cfg, "spca or firm-pca");
  }
  {
    ExperimentConfig cfg;
    cfg.problem = "firm-pca";
    cfg.lambda = 1.0;
    cfg.kappa = 1.0;
    expect_throw(cfg, "lambda < kappa");
  }
  {
    ExperimentConfig cfg;
    cfg.workers = 2;  // mode stays sync
    expect_throw(cfg, "async");
  }
  {
    ExperimentConfig cfg;
    cfg.delay = "constant";  // mode stays sync
    cfg.tau = 2;
    expect_throw(cfg, "sim-async");
  }
  {
    ExperimentConfig cfg;
    cfg.mode = "sim-async";
    cfg.delay = "constant";
    cfg.tau = 2;
    cfg.delay_tau = 5;
    expect_throw(cfg, "delay-tau");
  }
  {
    ExperimentConfig cfg;
    cfg.epochs = 0;
    expect_throw(cfg, "epochs or total-updates");
  }
  {
    ExperimentConfig cfg;
    cfg.regime = "fixed";
    expect_throw(cfg, "regime");
  }

  // The short selection alias passes validation and maps to the sweep.
  ExperimentConfig cfg;
  cfg.selection = "cyclic";
  cfg.validate();
  CHECK(selection_from_string(cfg.selection) ==
        BlockSelection::kDedicatedCyclic);
}

TEST_CASE("experiment artifacts have the documented shape") {
  unsetenv("SAPALM_MAX_THREADS");
  TempDir dir("sapalm_harness_shape");
  ExperimentConfig cfg;
  cfg.n = 25;
  cfg.d = 2;
  cfg.epochs = 4;
  cfg.seed = 3;

  const auto art = run_experiment(cfg, dir.path / "runA");
  CHECK(!art.summary.aborted);
  CHECK(art.summary.total_updates == 8);
  CHECK(!art.workers_capped);
  CHECK(art.data_bin.empty());

  const std::string csv = slurp(art.trace_csv);
  const auto lines = split_lines(csv);
  REQUIRE(lines.size() >= 2);
  CHECK(lines[0] ==
        "k,epoch,wall_time_s,objective,stationarity,lyapunov,max_delay,c_k");
  REQUIRE(lines.size() == 6);  // header + epochs 0..4

  std::uint64_t prev_k = 0;
  double prev_obj = 0.0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split_fields(lines[i]);
    REQUIRE(fields.size() == 8);
    const std::uint64_t k = std::stoull(fields[0]);
    const double epoch = std::stod(fields[1]);
    const double wall = std::stod(fields[2]);
    const double obj = std::stod(fields[3]);
    const double stat = std::stod(fields[4]);
    const double lyap = std::stod(fields[5]);
    const double c_k = std::stod(fields[7]);
    if (i > 1) CHECK(k > prev_k);
    prev_k = k;
    // Single-threaded default: the time column runs on the virtual clock.
    CHECK(wall == epoch);
    CHECK(std::isfinite(obj));
    CHECK(std::isfinite(stat));
    CHECK(std::isfinite(lyap));
    CHECK(c_k == 1.0);  // summable regime
    if (i > 1) CHECK(obj <= prev_obj);
    prev_obj = obj;
  }

  // Bitwise repeatable, including the metadata minus the measured timings.
  const auto art2 = run_experiment(cfg, dir.path / "runB");
  CHECK(slurp(art2.trace_csv) == csv);
  auto without_timings = [](const std::string& text) {
    std::string out;
    for (const auto& line : split_lines(text))
      if (line.rfind("# elapsed-s", 0) != 0 &&
          line.rfind("# updates-per-s", 0) != 0)
        out += line + "\n";
    return out;
  };
  CHECK(without_timings(slurp(art2.run_meta)) ==
        without_timings(slurp(art.run_meta)));
}

TEST_CASE("run metadata reparses to the identical resolved config") {
  unsetenv("SAPALM_MAX_THREADS");
  TempDir dir("sapalm_harness_meta");
  ExperimentConfig cfg;
  cfg.n = 20;
  cfg.d = 2;
  cfg.epochs = 2;
  cfg.mode = "sim-async";
  cfg.tau = 2;
  cfg.delay = "iid-uniform";
  cfg.seed = 5;

  const auto art = run_experiment(cfg, dir.path);
  const std::string meta = slurp(art.run_meta);
  CHECK_THAT(meta, ContainsSubstring("# library-version = "));
  CHECK_THAT(meta, ContainsSubstring("# total-updates-completed = 4"));
  CHECK_THAT(meta, ContainsSubstring("# updates-per-epoch = 2"));
  CHECK_THAT(meta, ContainsSubstring("# aborted = false"));

  // Comment lines drop out; what remains is the resolved config verbatim.
  const auto reparsed = ExperimentConfig::from_string(meta);
  CHECK(reparsed.serialize() == cfg.resolved().serialize());
}

TEST_CASE("aborted runs still flush artifacts with an error marker") {
  unsetenv("SAPALM_MAX_THREADS");
  TempDir dir("sapalm_harness_abort");
  ExperimentConfig cfg;
  cfg.n = 15;
  cfg.d = 2;
  cfg.epochs = 3;
  cfg.noise = "gaussian-constant";
  cfg.sigma0 = 1e308;  // variance overflows on the first draw

  const auto art = run_experiment(cfg, dir.path);
  CHECK(art.summary.aborted);
  const std::string csv = slurp(art.trace_csv);
  CHECK_THAT(csv, ContainsSubstring("# ERROR"));
  CHECK_THAT(csv, ContainsSubstring("non-finite"));
  CHECK_THAT(slurp(art.run_meta), ContainsSubstring("# aborted = true"));
}

TEST_CASE("data files integrate with configured runs") {
  unsetenv("SAPALM_MAX_THREADS");
  TempDir dir("sapalm_harness_data");

  // First run generates and saves its matrix.
  ExperimentConfig cfg;
  cfg.n = 18;
  cfg.d = 2;
  cfg.epochs = 2;
  cfg.seed = 7;
  cfg.save_data = true;
  const auto art = run_experiment(cfg, dir.path / "gen");
  REQUIRE(!art.data_bin.empty());
  CHECK(std::filesystem::exists(art.data_bin));

  // Second run loads the same matrix and replays the identical trace.
  ExperimentConfig replay = cfg;
  replay.save_data = false;
  replay.data_file = art.data_bin.string();
  const auto art2 = run_experiment(replay, dir.path / "replay");
  CHECK(slurp(art2.trace_csv) == slurp(art.trace_csv));

  // A mismatched n is caught before any work happens.
  ExperimentConfig wrong = replay;
  wrong.n = 17;
  CHECK_THROWS_WITH(run_experiment(wrong, dir.path / "bad"),
                    ContainsSubstring("data file holds"));
}

TEST_CASE("minibatch runs echo the batch schedule in the metadata") {
  unsetenv("SAPALM_MAX_THREADS");
  TempDir dir("sapalm_harness_minibatch");
  ExperimentConfig cfg;
  cfg.n = 16;
  cfg.d = 2;
  cfg.epochs = 2;
  cfg.noise = "minibatch";
  cfg.batch_base = 2;

  const auto art = run_experiment(cfg, dir.path);
  CHECK(!art.summary.aborted);
  const std::string meta = slurp(art.run_meta);
  CHECK_THAT(meta, ContainsSubstring("# minibatch-sizes ="));
  CHECK_THAT(meta, ContainsSubstring("k0:2"));
}

TEST_CASE("speedup table pins the single-worker baseline at one") {
  unsetenv("SAPALM_MAX_THREADS");
  ExperimentConfig cfg;
  cfg.n = 50;
  cfg.d = 2;
  cfg.epochs = 2;
  cfg.seed = 13;

  SpeedupOptions opt;
  opt.worker_counts = {2, 1};  // order does not matter, 1 leads the sweep
  opt.repetitions = 1;
  opt.discard_warmup = false;
  opt.references = {{2, 1.9}};
  const auto report = speedup_table(cfg, opt);
  CHECK(report.complete);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].workers == 1);
  CHECK(report.rows[0].speedup == 1.0);
  CHECK(report.rows[0].seconds > 0.0);
  CHECK(report.rows[0].reference == 0.0);
  CHECK(report.rows[1].workers == 2);
  CHECK(report.rows[1].speedup > 0.0);
  CHECK(report.rows[1].reference == 1.9);

  std::ostringstream csv;
  write_speedup_csv(csv, report);
  const auto lines = split_lines(csv.str());
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "workers,seconds,speedup,reference");
  CHECK(split_fields(lines[1])[0] == "1");
  const std::string table = format_speedup_table(report);
  CHECK_THAT(table, ContainsSubstring("workers"));
  CHECK_THAT(table, ContainsSubstring("1.0000"));
}

TEST_CASE("worker caps come from the environment") {
  unsetenv("SAPALM_MAX_THREADS");
  CHECK(worker_thread_cap() == 0);
  setenv("SAPALM_MAX_THREADS", "3", 1);
  CHECK(worker_thread_cap() == 3);
  setenv("SAPALM_MAX_THREADS", "0", 1);
  CHECK(worker_thread_cap() == 0);
  setenv("SAPALM_MAX_THREADS", "garbage", 1);
  CHECK(worker_thread_cap() == 0);

  // A cap of one limits the speedup sweep to the baseline row.
  setenv("SAPALM_MAX_THREADS", "1", 1);
  ExperimentConfig cfg;
  cfg.n = 40;
  cfg.d = 2;
  cfg.epochs = 1;
  SpeedupOptions opt;
  opt.worker_counts = {1, 2};
  opt.repetitions = 1;
  opt.discard_warmup = false;
  const auto report = speedup_table(cfg, opt);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].workers == 1);

  // And run_experiment trims an oversized pool, noting it in the meta.
  TempDir dir("sapalm_harness_cap");
  ExperimentConfig async_cfg;
  async_cfg.n = 20;
  async_cfg.d = 2;
  async_cfg.epochs = 1;
  async_cfg.mode = "async";
  async_cfg.workers = 4;
  const auto art = run_experiment(async_cfg, dir.path);
  CHECK(art.workers_capped);
  CHECK_THAT(slurp(art.run_meta),
             ContainsSubstring("# workers capped to 1"));
  unsetenv("SAPALM_MAX_THREADS");

  CHECK(detect_physical_cores() >= 1);
}

TEST_CASE("verification suites resolve by name") {
  CHECK_THROWS_AS(verify::run_suite("no-such-suite"), ParameterError);
  CHECK_THROWS_WITH(verify::run_suite("no-such-suite"),
                    ContainsSubstring("prox-oracle"));
  const auto results = verify::run_suite("gradient-fd");
  REQUIRE(results.size() == 1);
  CHECK(results[0].name == "gradient-fd");
  CHECK(results[0].pass);
}
