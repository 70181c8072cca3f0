#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memsched/graph.hpp"
#include "memsched/plan.hpp"
#include "memsched/types.hpp"

namespace memsched {

enum class SimMode { Vanilla, Scheduled, Passive };

struct SimConfig {
  Tick ticks_per_iteration_limit = 10'000'000;
  int iterations = 1;
  std::uint64_t seed = 0;
  std::map<int, double> gpu_slowdown_curve;  // concurrent jobs -> multiplier
  SimMode mode = SimMode::Vanilla;
  Bytes memory_budget = 0;  // enforced in passive mode only
  Bytes pcie_bandwidth = 1;
  Tick transfer_setup = 0;

  double slowdown(int concurrent_jobs) const;
};

struct SimJob {
  ComputeGraph graph;
  std::map<OpId, Tick> true_latencies;  // base latency before slowdown
  Tick launch_tick = 0;
};

struct TraceRow {
  Tick tick = 0;
  JobId job_id;
  std::string event_kind;
  TensorId tensor_id;
  Bytes footprint = 0;  // global footprint after the event
};

struct TransferInterval {
  Tick start = 0;
  Tick end = 0;
  JobId job_id;
  TensorId tensor_id;
  std::string kind;  // swap_out / swap_in / passive_swap_in
};

struct SimulationTrace {
  std::vector<std::pair<Tick, Bytes>> footprint_curve;  // global
  std::map<JobId, std::vector<std::pair<Tick, Bytes>>> per_job_curve;
  std::map<JobId, std::vector<Tick>> iteration_times;
  std::int64_t passive_swap_count = 0;
  Tick blocked_ticks = 0;
  Bytes peak = 0;
  std::map<JobId, Bytes> per_job_peak;
  std::vector<TraceRow> rows;
  std::vector<TransferInterval> transfers;
  std::vector<std::string> safety_violations;
  std::map<JobId, std::vector<std::int64_t>> plan_versions;  // per iteration
  // Passive fetches per (job, iteration, tensor); lets tests check that a
  // prefetched tensor never stalls an access.
  std::vector<std::tuple<JobId, int, TensorId>> passive_events;

  std::string to_csv() const;
};

/// Hook for the planning side: called at each job's iteration boundary with
/// that iteration's measured per-op latencies. A returned plan map is
/// applied to the affected jobs before their next iteration starts.
class SimController {
 public:
  virtual ~SimController() = default;
  virtual std::optional<std::map<JobId, SchedulingPlan>> on_iteration_end(
      const JobId& job, int iteration,
      const std::map<OpId, Tick>& observed_latencies) = 0;
};

/// Deterministic discrete-event run of all jobs: one compute stream per job,
/// one global FIFO transfer channel, plan-driven prefetching with passive
/// fallback, LRU thrashing in passive mode.
SimulationTrace simulate(const std::vector<SimJob>& jobs,
                         const std::map<JobId, SchedulingPlan>& plans,
                         const SimConfig& config,
                         SimController* controller = nullptr);

struct MetricsReport {
  double msr = 0.0;
  double eor = 0.0;
  double cbr = 0.0;  // +inf sentinel when eor == 0

  std::string to_json() const;
};

MetricsReport compute_metrics(const SimulationTrace& vanilla,
                              const SimulationTrace& experimental);

/// Formula-level helper: CBR from already-computed ratios.
double cost_benefit_ratio(double msr, double eor);

}  // namespace memsched
