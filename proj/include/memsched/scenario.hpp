#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memsched/config.hpp"
#include "memsched/orchestrator.hpp"
#include "memsched/simulator.hpp"

namespace memsched {

struct ScenarioJobEntry {
  std::string graph_file;
  double max_swap_ratio = 1.0;
  Tick launch_tick = 0;
};

struct ScenarioConfig {
  PlannerConfig planner;
  std::vector<ScenarioJobEntry> job_entries;
  int iterations = 3;
  std::uint64_t seed = 0;
  std::map<int, double> gpu_slowdown_curve;  // empty -> flat 1.0
  std::string predictor_file;                // either this or latency_file
  std::string latency_file;                  // JSON {job: {op: ticks}}

  std::vector<ComputeGraph> graphs;  // loaded alongside the config
};

/// Parses the scenario JSON and loads every referenced graph; relative paths
/// resolve against base_dir.
ScenarioConfig load_scenario(const std::string& document,
                             const std::string& base_dir);

struct ModeStats {
  std::string mode;
  Bytes peak = 0;
  double total_mean_iteration_time = 0.0;  // summed over jobs
  std::int64_t passive_swap_count = 0;
  Tick blocked_ticks = 0;
  int replan_count = 0;
  std::map<JobId, std::vector<Tick>> iteration_times;

  std::string to_json() const;
  static ModeStats from_json(const std::string& document);
};

struct ScenarioResult {
  std::map<std::string, SimulationTrace> traces;  // keyed by mode
  std::map<std::string, ModeStats> stats;
  std::map<JobId, SchedulingPlan> plans;      // scheduled mode
  std::map<JobId, PeakReport> peak_reports;   // planner-side analysis
  int replan_count = 0;
  std::string plan_diagnostic;  // set when the budget was unattainable
};

/// Runs the requested modes ("vanilla", "scheduled", "passive"). Scheduled
/// mode requires a latency source in the config.
ScenarioResult run_scenario(const ScenarioConfig& config,
                            const std::set<std::string>& modes);

/// Planning only: builds plans and peak reports without simulating.
ScenarioResult plan_scenario(const ScenarioConfig& config);

/// Summary table, one row per mode with MSR/EOR/CBR against vanilla.
std::string summary_table(const std::map<std::string, ModeStats>& stats,
                          const std::string& format);

}  // namespace memsched
