#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memsched/access.hpp"
#include "memsched/types.hpp"

namespace memsched {

enum class SwapDirection { Out, In };

/// Anchor of -1 means "iteration start" (wrapped prefetches may start before
/// any access of the new iteration has finished).
constexpr AccessId kIterationStartAnchor = -1;

struct SwapEvent {
  std::int64_t event_id = -1;
  JobId job_id;
  TensorId tensor_id;  // storage tensor being transferred
  SwapDirection direction = SwapDirection::Out;
  AccessId trigger_access = kIterationStartAnchor;
  Tick delta_time = 0;
  Tick start_time = 0;
  Tick end_time = 0;
  Tick earliest_time = 0;
  Tick latest_time = 0;
  bool wraps_iteration = false;
  std::int64_t pair_id = -1;  // event_id of the matching out/in event
  AccessId serves_access = -1;  // for swap-ins: the TUA prefetched for
};

struct RecomputeEvent {
  std::int64_t event_id = -1;
  JobId job_id;
  TensorId tensor_id;
  AccessId target_access = -1;
  OpId regen_op;
  Tick recompute_latency = 0;
  Bytes memory_saving = 0;
};

struct SchedulingPlan {
  JobId job_id;
  std::vector<SwapEvent> swap_events;
  std::vector<RecomputeEvent> recompute_events;
  std::set<AccessId> release_flags;
  std::int64_t version = 0;

  const SwapEvent* find_event(std::int64_t event_id) const;
  std::int64_t next_event_id() const;
};

/// ceil(size / bandwidth) + setup ticks.
Tick transfer_duration(Bytes size, Bytes pcie_bandwidth, Tick transfer_setup);

std::string save_plans(const std::map<JobId, SchedulingPlan>& plans);
std::map<JobId, SchedulingPlan> load_plans(const std::string& document);

}  // namespace memsched
