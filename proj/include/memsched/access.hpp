#pragma once

#include <map>
#include <vector>

#include "memsched/graph.hpp"
#include "memsched/types.hpp"

namespace memsched {

enum class AccessType { TGA, TUA };

struct TensorAccess {
  AccessId access_id = -1;
  TensorId tensor_id;
  OpId op_id;
  JobId job_id;
  AccessType type = AccessType::TUA;
  Tick start_time = 0;
  Tick end_time = 0;
  bool release_flag = false;
};

/// Time-ordered tensor accesses of one job for one iteration. This is the
/// planner's sole view of a workload.
struct AccessSequence {
  JobId job_id;
  std::vector<TensorAccess> accesses;
  Tick iteration_period = 0;

  const TensorAccess& access(AccessId id) const;
  /// Accesses of one tensor, sorted by time.
  std::vector<const TensorAccess*> accesses_of(const TensorId& tensor) const;
};

/// Walks ops in topological order, back to back on one compute stream, and
/// emits TUAs for inputs and TGAs for outputs stamped with each op's
/// [start, end) interval. Throws on a missing latency entry.
AccessSequence generate_access_sequence(const ComputeGraph& graph,
                                        const std::map<OpId, Tick>& latencies);

/// Sets release_flag on the last access of every tensor that is not a
/// parameter, not an updated parameter and not a job output.
AccessSequence activity_analysis(const AccessSequence& seq,
                                 const ComputeGraph& graph);

}  // namespace memsched
