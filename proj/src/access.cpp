#include "memsched/access.hpp"

#include <algorithm>

namespace memsched {

const TensorAccess& AccessSequence::access(AccessId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= accesses.size())
    throw ValidationError("unknown access id " + std::to_string(id) +
                          " in job " + job_id);
  return accesses[static_cast<std::size_t>(id)];
}

std::vector<const TensorAccess*> AccessSequence::accesses_of(
    const TensorId& tensor) const {
  std::vector<const TensorAccess*> out;
  for (const auto& a : accesses)
    if (a.tensor_id == tensor) out.push_back(&a);
  std::sort(out.begin(), out.end(),
            [](const TensorAccess* a, const TensorAccess* b) {
              if (a->start_time != b->start_time)
                return a->start_time < b->start_time;
              return a->access_id < b->access_id;
            });
  return out;
}

AccessSequence generate_access_sequence(const ComputeGraph& graph,
                                        const std::map<OpId, Tick>& latencies) {
  AccessSequence seq;
  seq.job_id = graph.job_id();
  Tick clock = 0;
  for (const OpId& oid : topological_order(graph)) {
    auto it = latencies.find(oid);
    if (it == latencies.end())
      throw ValidationError("missing latency entry for op " + oid);
    if (it->second < 0)
      throw ValidationError("negative latency for op " + oid);
    const OperatorSpec& op = graph.op(oid);
    const Tick start = clock;
    const Tick end = clock + it->second;
    auto emit = [&](const TensorId& tid, AccessType type) {
      TensorAccess a;
      a.access_id = static_cast<AccessId>(seq.accesses.size());
      a.tensor_id = tid;
      a.op_id = oid;
      a.job_id = seq.job_id;
      a.type = type;
      a.start_time = start;
      a.end_time = end;
      seq.accesses.push_back(std::move(a));
    };
    for (const auto& tid : op.inputs) emit(tid, AccessType::TUA);
    for (const auto& tid : op.outputs) emit(tid, AccessType::TGA);
    clock = end;
  }
  seq.iteration_period = clock;
  return seq;
}

AccessSequence activity_analysis(const AccessSequence& seq,
                                 const ComputeGraph& graph) {
  AccessSequence out = seq;
  std::map<TensorId, std::size_t> last;
  for (std::size_t i = 0; i < out.accesses.size(); ++i)
    last[out.accesses[i].tensor_id] = i;
  for (auto& a : out.accesses) a.release_flag = false;
  for (const auto& [tid, idx] : last) {
    TensorKind kind = graph.tensor(tid).kind;
    // Inputs, parameters and outputs live in framework-owned buffers that
    // persist across iterations; only interim tensors die at last use.
    if (kind == TensorKind::Parameter || kind == TensorKind::UpdatedParameter ||
        kind == TensorKind::Output || kind == TensorKind::Input)
      continue;
    out.accesses[idx].release_flag = true;
  }
  return out;
}

}  // namespace memsched
