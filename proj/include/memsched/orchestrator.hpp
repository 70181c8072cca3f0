#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memsched/config.hpp"
#include "memsched/latency.hpp"
#include "memsched/recompute_planner.hpp"
#include "memsched/swap_planner.hpp"

namespace memsched {

struct BuildResult {
  std::map<JobId, SchedulingPlan> plans;
  std::vector<Bytes> merged_peak_history;  // one entry per loop iteration
  Bytes final_merged_peak = 0;
  bool within_budget = true;
  std::string diagnostic;  // set when the budget is unattainable
  std::map<JobId, PeakReport> reports;
};

/// Planning fixed point: swap passes while they succeed, then recomputation
/// while the merged peak is over budget, bounded by the stall rule.
BuildResult build_plan(
    const std::vector<std::pair<ComputeGraph, std::map<OpId, Tick>>>& jobs,
    const PlannerConfig& config);

/// Latency table from the fitted predictor at a fixed usage level, one
/// dimension slot per input tensor (its size in bytes).
std::map<OpId, Tick> predict_latencies(const ComputeGraph& graph,
                                       const LatencyPredictor& predictor,
                                       double gpu_usage);

/// Planning lifecycle: cold start from predicted latencies, EWMA correction
/// from observations, replanning when the summed execution time drifts past
/// the threshold. Plans carry strictly monotone per-job versions.
class Orchestrator {
 public:
  Orchestrator(PlannerConfig config, std::vector<ComputeGraph> graphs);

  /// Cold start with an explicit latency table per job.
  BuildResult plan_with_latencies(
      const std::map<JobId, std::map<OpId, Tick>>& latencies);
  /// Cold start from the predictor.
  BuildResult plan_cold_start(const LatencyPredictor& predictor);

  /// Feeds one round of observed per-op latencies. Returns fresh plans when
  /// the drift trigger fires, nullopt otherwise.
  std::optional<std::map<JobId, SchedulingPlan>> replan_if_needed(
      const std::map<JobId, std::map<OpId, Tick>>& observed);

  int replan_count() const { return replan_count_; }
  const std::map<JobId, std::map<OpId, Tick>>& latency_table() const {
    return latencies_;
  }
  const PlannerConfig& config() const { return config_; }

 private:
  BuildResult rebuild();

  PlannerConfig config_;
  std::vector<ComputeGraph> graphs_;
  std::map<JobId, std::map<OpId, Tick>> latencies_;
  std::map<JobId, std::int64_t> versions_;
  Tick last_plan_sum_ = 0;
  int replan_count_ = 0;
};

}  // namespace memsched
