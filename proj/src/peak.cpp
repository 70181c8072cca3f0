#include "memsched/peak.hpp"

#include <algorithm>
#include <limits>

#include <nlohmann/json.hpp>

namespace memsched {

const TensorCatalog::Entry& TensorCatalog::at(const TensorId& id) const {
  auto it = entries.find(id);
  if (it == entries.end())
    throw ValidationError("unknown tensor " + id + " in catalog of " + job_id);
  return it->second;
}

const TensorId& TensorCatalog::storage(const TensorId& id) const {
  return at(id).storage;
}

Bytes TensorCatalog::storage_size(const TensorId& id) const {
  return at(storage(id)).size;
}

bool TensorCatalog::is_aliased(const TensorId& id) const {
  return at(id).storage != id;
}

TensorCatalog build_catalog(const ComputeGraph& graph) {
  TensorCatalog catalog;
  catalog.job_id = graph.job_id();
  for (const auto& t : graph.tensors()) {
    TensorCatalog::Entry e;
    e.size = t.size;
    e.kind = t.kind;
    e.storage = graph.storage_of(t.id);
    catalog.entries[t.id] = std::move(e);
  }
  return catalog;
}

namespace {

bool is_free(const TimelineEvent& e) {
  return e.type == TimelineEventType::Release ||
         e.type == TimelineEventType::SwapOutComplete;
}

int type_rank(TimelineEventType t) { return static_cast<int>(t); }

void sort_timeline(std::vector<TimelineEvent>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const TimelineEvent& a, const TimelineEvent& b) {
                     if (a.time != b.time) return a.time < b.time;
                     if (is_free(a) != is_free(b)) return is_free(a);
                     if (a.tensor_id != b.tensor_id)
                       return a.tensor_id < b.tensor_id;
                     if (type_rank(a.type) != type_rank(b.type))
                       return type_rank(a.type) < type_rank(b.type);
                     return a.access_id < b.access_id;
                   });
}

}  // namespace

std::vector<TimelineEvent> build_timeline(const AccessSequence& seq,
                                          const SchedulingPlan& plan,
                                          const TensorCatalog& catalog) {
  std::vector<TimelineEvent> events;

  // Next access start per storage, for deciding whether a release is owned by
  // a following swap-out instead.
  std::map<TensorId, std::vector<const TensorAccess*>> by_storage;
  for (const auto& a : seq.accesses)
    by_storage[catalog.storage(a.tensor_id)].push_back(&a);

  auto next_access_start = [&](const TensorId& storage, Tick after) {
    Tick next = std::numeric_limits<Tick>::max();
    for (const auto* a : by_storage[storage])
      if (a->start_time >= after) next = std::min(next, a->start_time);
    return next;
  };

  for (const auto& a : seq.accesses) {
    const TensorId storage = catalog.storage(a.tensor_id);
    const Bytes size = catalog.at(storage).size;
    if (a.type == AccessType::TGA) {
      TimelineEvent e;
      e.time = a.start_time;
      e.type = TimelineEventType::Tga;
      e.tensor_id = storage;
      e.size = size;
      e.delta = catalog.is_aliased(a.tensor_id) ? 0 : size;
      e.access_id = a.access_id;
      events.push_back(e);
    } else {
      TimelineEvent e;
      e.time = a.end_time;
      e.type = TimelineEventType::Tua;
      e.tensor_id = storage;
      e.size = size;
      e.delta = 0;
      e.access_id = a.access_id;
      e.release_flagged = plan.release_flags.count(a.access_id) > 0;
      events.push_back(e);
    }
    if (plan.release_flags.count(a.access_id)) {
      // A swap-out scheduled between this access and the storage's next one
      // owns the eviction; no separate release then.
      bool owned_by_swap = false;
      const Tick next = next_access_start(storage, a.end_time);
      for (const auto& ev : plan.swap_events) {
        if (ev.direction != SwapDirection::Out) continue;
        if (catalog.storage(ev.tensor_id) != storage) continue;
        if (ev.start_time >= a.end_time && ev.start_time < next) {
          owned_by_swap = true;
          break;
        }
      }
      if (!owned_by_swap) {
        TimelineEvent e;
        e.time = a.end_time;
        e.type = TimelineEventType::Release;
        e.tensor_id = storage;
        e.size = size;
        e.delta = -size;
        e.access_id = a.access_id;
        events.push_back(e);
      }
    }
  }

  for (const auto& ev : plan.swap_events) {
    const TensorId storage = catalog.storage(ev.tensor_id);
    const Bytes size = catalog.at(storage).size;
    TimelineEvent e;
    e.tensor_id = storage;
    e.size = size;
    if (ev.direction == SwapDirection::Out) {
      Tick when = ev.end_time;
      if (ev.trigger_access != kIterationStartAnchor)
        when = std::max(when, seq.access(ev.trigger_access).end_time);
      e.time = when;
      e.type = TimelineEventType::SwapOutComplete;
      e.delta = -size;
    } else {
      Tick when = ev.end_time;
      if (ev.wraps_iteration && seq.iteration_period > 0)
        when = ((when % seq.iteration_period) + seq.iteration_period) %
               seq.iteration_period;
      e.time = when;
      e.type = TimelineEventType::SwapInComplete;
      e.delta = size;
    }
    events.push_back(e);
  }

  // A recomputation re-materializes the tensor right before its target
  // access; model it as a fresh generating access.
  for (const auto& ev : plan.recompute_events) {
    const TensorAccess& target = seq.access(ev.target_access);
    const TensorId storage = catalog.storage(ev.tensor_id);
    TimelineEvent e;
    e.time = target.start_time - ev.recompute_latency;
    e.type = TimelineEventType::Tga;
    e.tensor_id = storage;
    e.size = catalog.at(storage).size;
    e.delta = e.size;
    events.push_back(e);
  }

  sort_timeline(events);
  return events;
}

std::map<TensorId, Bytes> initial_resident_set(const TensorCatalog& catalog,
                                               const SchedulingPlan& plan) {
  std::map<TensorId, Bytes> resident;
  for (const auto& [id, entry] : catalog.entries) {
    if (entry.storage != id) continue;  // roots only
    if (entry.kind == TensorKind::Parameter || entry.kind == TensorKind::Input ||
        entry.kind == TensorKind::Output)
      resident[id] = entry.size;
  }
  for (const auto& ev : plan.swap_events) {
    if (ev.direction == SwapDirection::In && ev.wraps_iteration)
      resident.erase(catalog.storage(ev.tensor_id));
  }
  return resident;
}

PeakReport analyze_peak(const std::vector<TimelineEvent>& timeline,
                        const std::map<TensorId, Bytes>& initial_resident) {
  PeakReport report;
  std::set<TensorId> in_gpu;
  Bytes footprint = 0;
  for (const auto& [id, size] : initial_resident) {
    in_gpu.insert(id);
    footprint += size;
  }
  report.memory_peak = footprint;
  report.peak_tensors = in_gpu;
  report.peak_time = 0;
  report.footprint_curve.emplace_back(0, footprint);

  std::optional<AccessId> last_input_access;
  for (const auto& e : timeline) {
    switch (e.type) {
      case TimelineEventType::Tga:
        if (!in_gpu.count(e.tensor_id)) {
          footprint += e.delta;
          in_gpu.insert(e.tensor_id);
        }
        break;
      case TimelineEventType::Tua:
        if (!e.release_flagged) last_input_access = e.access_id;
        break;
      case TimelineEventType::Release:
      case TimelineEventType::SwapOutComplete:
        if (!in_gpu.count(e.tensor_id))
          throw ValidationError("double release of tensor " + e.tensor_id);
        footprint -= e.size;
        in_gpu.erase(e.tensor_id);
        break;
      case TimelineEventType::SwapInComplete:
        if (in_gpu.count(e.tensor_id))
          throw ValidationError("swap-in of resident tensor " + e.tensor_id);
        footprint += e.size;
        in_gpu.insert(e.tensor_id);
        break;
    }
    if (footprint < 0)
      throw ValidationError("negative footprint at tick " +
                            std::to_string(e.time));
    report.footprint_curve.emplace_back(e.time, footprint);
    if (footprint > report.memory_peak) {
      report.memory_peak = footprint;
      report.peak_tensors = in_gpu;
      report.peak_time = e.time;
      report.last_input_access = last_input_access;
    }
  }
  return report;
}

PeakReport analyze_job(const AccessSequence& seq, const SchedulingPlan& plan,
                       const TensorCatalog& catalog) {
  return analyze_peak(build_timeline(seq, plan, catalog),
                      initial_resident_set(catalog, plan));
}

Bytes merge_global_peak(const std::vector<PeakReport>& reports) {
  Bytes total = 0;
  for (const auto& r : reports) total += r.memory_peak;
  return total;
}

std::string PeakReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["memory_peak"] = memory_peak;
  doc["peak_tensors"] =
      std::vector<TensorId>(peak_tensors.begin(), peak_tensors.end());
  if (last_input_access)
    doc["last_input_access"] = *last_input_access;
  else
    doc["last_input_access"] = nullptr;
  doc["peak_time"] = peak_time;
  doc["footprint_curve"] = nlohmann::ordered_json::array();
  for (const auto& [t, b] : footprint_curve)
    doc["footprint_curve"].push_back({t, b});
  return doc.dump(2) + "\n";
}

}  // namespace memsched
