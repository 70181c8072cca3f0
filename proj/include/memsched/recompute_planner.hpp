#pragma once

#include <vector>

#include "memsched/config.hpp"
#include "memsched/swap_planner.hpp"

namespace memsched {

/// Memory saved per tick of regeneration time; the recompute ranking metric.
double msps(Bytes memory_saving, Tick recompute_time);

/// Converts the single best-value eligible access to recomputation: the
/// tensor is released after its access preceding the target, regenerated by
/// re-running its producer right before the target, and downstream accesses
/// shift by the regeneration latency. Returns false when nothing is eligible
/// or the merged peak is already within budget.
bool recompute_pass(std::vector<JobContext>& jobs, Bytes budget_bytes,
                    const PlannerConfig& config);

}  // namespace memsched
