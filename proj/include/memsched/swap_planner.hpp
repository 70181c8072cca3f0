#pragma once

#include <map>
#include <set>
#include <utility>
#include <vector>

#include "memsched/access.hpp"
#include "memsched/config.hpp"
#include "memsched/graph.hpp"
#include "memsched/peak.hpp"
#include "memsched/plan.hpp"
#include "memsched/types.hpp"

namespace memsched {

/// Everything the planners need about one job, kept together because the
/// passes mutate plan, sequence and report jointly.
struct JobContext {
  ComputeGraph graph;
  TensorCatalog catalog;
  std::map<OpId, Tick> latencies;
  AccessSequence seq;       // working copy, shifted by recomputations
  SchedulingPlan plan;
  PeakReport report;
  std::set<AccessId> base_release_flags;  // from activity analysis

  void refresh_report() { report = analyze_job(seq, plan, catalog); }
};

JobContext make_job_context(ComputeGraph graph,
                            const std::map<OpId, Tick>& latencies);

struct FeasibleRegion {
  Tick begin = 0;
  Tick end = 0;
};

struct SwapBudget {
  std::map<JobId, double> max_ratio;          // MSR per job
  std::map<JobId, int> swapped_out_count;     // SON per job
  int total_swapped = 0;
  std::map<JobId, std::set<TensorId>> swapped_storages;

  /// Post-add ratio gate; the very first swap in the system is exempt
  /// (0/0 is undefined).
  bool allows(const JobId& job) const;
  void record(const JobId& job, const TensorId& storage);
  bool already_swapped(const JobId& job, const TensorId& storage) const;
};

/// Swap-out window for a peak tensor: from the end of its last access
/// starting before the peak (the TGA at minimum) to the peak time.
std::pair<Tick, Tick> swap_window(const TensorId& storage,
                                  const PeakReport& report,
                                  const AccessSequence& seq,
                                  const TensorCatalog& catalog);

/// Maximal subintervals of [window_begin, window_end] avoiding every busy
/// interval, filtered to length >= duration, ascending.
std::vector<FeasibleRegion> feasible_regions(
    Tick window_begin, Tick window_end,
    const std::vector<std::pair<Tick, Tick>>& busy, Tick duration);

struct ScheduleResult {
  bool succeed = false;
  bool succeed_swap_out = false;
  bool have_first_access = false;
};

/// One attempt to place a swap-out / swap-in pair for `storage` inside
/// [earliest, latest]. On swap-in failure `latest` is tightened to the
/// serving access's end time so the caller can retry.
ScheduleResult schedule_swap(JobContext& job, const TensorId& storage,
                             Tick earliest, Tick& latest,
                             const PlannerConfig& config);

/// Across-iteration pair for a parameter overwritten in the Opt phase:
/// swap-out after the update, swap-in before the parameter's first use of
/// the next iteration.
ScheduleResult schedule_wrapped_swap(JobContext& job, const TensorId& param,
                                     const PlannerConfig& config);

/// One greedy sweep over the peak tensors of all jobs, largest first.
/// Returns whether any event was added.
bool swap_pass(std::vector<JobContext>& jobs, SwapBudget& budget,
               const PlannerConfig& config);

/// Re-derives every swap event's absolute times from its (trigger, delta)
/// anchor and drops pairs that no longer fit (deadline missed, overlap with
/// an access of their own tensor, or overlap with an earlier-kept event).
/// Release flags are rebuilt afterwards. Used after recomputation shifts
/// the access sequence.
void revalidate_swap_events(JobContext& job, const PlannerConfig& config);

/// base activity-analysis flags + one flag per kept swap-out / recompute,
/// on the access of the same storage that precedes the event.
void rebuild_release_flags(JobContext& job);

}  // namespace memsched
