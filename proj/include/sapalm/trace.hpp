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
// Run traces: checkpoint records, terminal summaries and delay statistics.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sapalm {

struct CheckpointRecord {
  std::uint64_t k = 0;     // completed updates at measurement time
  double epoch = 0.0;      // k / updates_per_epoch
  double wall_time_s = 0.0;
  double objective = 0.0;
  double stationarity = 0.0;
  double lyapunov = 0.0;
  unsigned max_delay = 0;  // max observed delay so far
  double c_k = 1.0;        // stepsize weight at this k
  std::vector<double> gammas;  // per-block stepsizes at this k
};

struct RunSummary {
  std::uint64_t total_updates = 0;
  double elapsed_s = 0.0;
  double updates_per_s = 0.0;
  unsigned max_observed_delay = 0;
  bool delay_exceeded_tau = false;  // async: theory assumption violated
  bool aborted = false;
  std::string abort_reason;
  std::string worker_block_map;  // how cyclic mode assigned work
};

// One completed update, kept only when a run asks for the full log
// (accounting checks in tests: no update may go missing).
struct UpdateRecord {
  std::uint32_t worker = 0;
  std::uint32_t block = 0;
  std::uint64_t flat = 0;  // coordinate index for coordinate updates
  double value = 0.0;      // written value, or squared step length for
                           // whole-block updates
};

struct RunTrace {
  std::vector<CheckpointRecord> checkpoints;
  std::vector<std::uint64_t> delay_histogram;  // index = observed delay
  RunSummary summary;
  std::uint64_t updates_per_epoch = 1;
  // Async checkpoints read the live iterate without stalling workers, so
  // their metrics are approximate under concurrency.
  bool approximate_checkpoints = false;
  std::vector<UpdateRecord> update_log;  // populated only on request
};

struct DelayStats {
  unsigned max = 0;
  std::vector<std::uint64_t> histogram;
};

inline DelayStats delay_stats(const RunTrace& trace) {
  DelayStats out;
  out.max = trace.summary.max_observed_delay;
  out.histogram = trace.delay_histogram;
  return out;
}

}  // namespace sapalm
