#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "memsched/access.hpp"
#include "memsched/graph.hpp"
#include "memsched/plan.hpp"
#include "memsched/types.hpp"

namespace memsched {

/// Size/kind/aliasing view of a job's tensors, keyed by tensor id. Storage
/// roots collapse updated parameters onto the parameter they overwrite.
struct TensorCatalog {
  struct Entry {
    Bytes size = 0;
    TensorKind kind = TensorKind::Interim;
    TensorId storage;  // equals the tensor id unless aliased
  };
  JobId job_id;
  std::map<TensorId, Entry> entries;

  const Entry& at(const TensorId& id) const;
  const TensorId& storage(const TensorId& id) const;
  Bytes storage_size(const TensorId& id) const;
  bool is_aliased(const TensorId& id) const;
};

TensorCatalog build_catalog(const ComputeGraph& graph);

enum class TimelineEventType {
  Tga,
  Tua,
  SwapInComplete,
  SwapOutComplete,
  Release
};

struct TimelineEvent {
  Tick time = 0;
  TimelineEventType type = TimelineEventType::Tua;
  TensorId tensor_id;  // storage id
  Bytes size = 0;
  Bytes delta = 0;
  AccessId access_id = -1;       // for tga/tua/release
  bool release_flagged = false;  // for tua
};

struct PeakReport {
  Bytes memory_peak = 0;
  std::set<TensorId> peak_tensors;
  std::optional<AccessId> last_input_access;
  Tick peak_time = 0;
  std::vector<std::pair<Tick, Bytes>> footprint_curve;

  std::string to_json() const;
};

/// Merges accesses, scheduled transfers and releases into one ordered event
/// list. Frees sort before increases at equal times, then by tensor id.
std::vector<TimelineEvent> build_timeline(const AccessSequence& seq,
                                          const SchedulingPlan& plan,
                                          const TensorCatalog& catalog);

/// Storages resident at the start of a steady-state iteration: parameters and
/// model inputs/outputs, minus storages prefetched by a wrapped swap-in.
std::map<TensorId, Bytes> initial_resident_set(const TensorCatalog& catalog,
                                               const SchedulingPlan& plan);

PeakReport analyze_peak(const std::vector<TimelineEvent>& timeline,
                        const std::map<TensorId, Bytes>& initial_resident);

/// Convenience wrapper: timeline + initial residency + peak walk for one job.
PeakReport analyze_job(const AccessSequence& seq, const SchedulingPlan& plan,
                       const TensorCatalog& catalog);

/// Global footprint peak: the sum of per-job peaks.
Bytes merge_global_peak(const std::vector<PeakReport>& reports);

}  // namespace memsched
