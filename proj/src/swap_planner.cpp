#include "memsched/swap_planner.hpp"

#include <algorithm>
#include <limits>

namespace memsched {

namespace {

constexpr int kMaxRetries = 16;

std::vector<const TensorAccess*> storage_accesses(const JobContext& job,
                                                  const TensorId& storage) {
  std::vector<const TensorAccess*> out;
  for (const auto& a : job.seq.accesses)
    if (job.catalog.storage(a.tensor_id) == storage) out.push_back(&a);
  std::sort(out.begin(), out.end(),
            [](const TensorAccess* a, const TensorAccess* b) {
              if (a->start_time != b->start_time)
                return a->start_time < b->start_time;
              return a->access_id < b->access_id;
            });
  return out;
}

// Lifts [s,e) by -period/0/+period and keeps the copies that intersect
// [lo, hi). Swap events repeat every iteration, so conflicts are cyclic.
void lift_into(std::vector<std::pair<Tick, Tick>>& busy, Tick s, Tick e,
               Tick period, Tick lo, Tick hi) {
  if (e <= s) return;
  for (int k = -1; k <= 1; ++k) {
    const Tick shift = static_cast<Tick>(k) * period;
    const Tick cs = s + shift;
    const Tick ce = e + shift;
    if (ce > lo && cs < hi) busy.emplace_back(cs, ce);
  }
}

std::vector<std::pair<Tick, Tick>> busy_intervals(
    const JobContext& job, const TensorId& storage, Tick lo, Tick hi,
    const std::vector<std::pair<Tick, Tick>>& extra) {
  std::vector<std::pair<Tick, Tick>> busy;
  const Tick period = std::max<Tick>(1, job.seq.iteration_period);
  for (const auto& e : job.plan.swap_events)
    lift_into(busy, e.start_time, e.end_time, period, lo, hi);
  for (const auto* a : storage_accesses(job, storage))
    lift_into(busy, a->start_time, a->end_time, period, lo, hi);
  for (const auto& [s, e] : extra) lift_into(busy, s, e, period, lo, hi);
  return busy;
}

struct Placement {
  bool ok = false;
  Tick start = 0;
  Tick end = 0;
};

Placement place_earliest(const std::vector<FeasibleRegion>& regions,
                         Tick duration) {
  for (const auto& r : regions)
    if (r.end - r.begin >= duration)
      return {true, r.begin, r.begin + duration};
  return {};
}

Placement place_latest(const std::vector<FeasibleRegion>& regions,
                       Tick duration) {
  for (auto it = regions.rbegin(); it != regions.rend(); ++it)
    if (it->end - it->begin >= duration)
      return {true, it->end - duration, it->end};
  return {};
}

// (trigger access, delta) for an event starting at `start`; wrapped events
// anchor in next-iteration coordinates.
std::pair<AccessId, Tick> anchor(const AccessSequence& seq, Tick start,
                                 bool wrapped) {
  Tick t = start;
  if (wrapped && seq.iteration_period > 0)
    t = ((t % seq.iteration_period) + seq.iteration_period) %
        seq.iteration_period;
  AccessId trigger = kIterationStartAnchor;
  Tick trigger_end = 0;
  for (const auto& a : seq.accesses) {
    if (a.end_time <= t &&
        (trigger == kIterationStartAnchor || a.end_time > trigger_end ||
         (a.end_time == trigger_end && a.access_id > trigger))) {
      trigger = a.access_id;
      trigger_end = a.end_time;
    }
  }
  return {trigger, t - trigger_end};
}

SwapEvent make_event(JobContext& job, const TensorId& storage,
                     SwapDirection dir, Tick start, Tick end, Tick earliest,
                     Tick latest, bool wrapped, AccessId serves) {
  SwapEvent e;
  e.event_id = job.plan.next_event_id();
  e.job_id = job.seq.job_id;
  e.tensor_id = storage;
  e.direction = dir;
  e.start_time = start;
  e.end_time = end;
  e.earliest_time = earliest;
  e.latest_time = latest;
  e.wraps_iteration = wrapped;
  e.serves_access = serves;
  auto [trigger, delta] = anchor(job.seq, start, wrapped);
  e.trigger_access = trigger;
  e.delta_time = delta;
  return e;
}

void flag_release_before(JobContext& job, const TensorId& storage,
                         Tick swap_out_start) {
  const TensorAccess* preceding = nullptr;
  for (const auto* a : storage_accesses(job, storage)) {
    if (a->end_time <= swap_out_start) preceding = a;
  }
  if (preceding) job.plan.release_flags.insert(preceding->access_id);
}

// Places an out/in pair inside [gap_lo, gap_hi] between two consecutive
// accesses of the storage; used for the greedy rest-of-accesses swap-ins.
bool try_gap_pair(JobContext& job, const TensorId& storage, Tick gap_lo,
                  Tick gap_hi, AccessId serves, const PlannerConfig& config) {
  const Bytes size = job.catalog.at(storage).size;
  const Tick d = transfer_duration(size, config.pcie_bandwidth,
                                   config.transfer_setup);
  if (gap_hi - gap_lo < 2 * d) return false;
  auto busy = busy_intervals(job, storage, gap_lo, gap_hi, {});
  auto out_regions = feasible_regions(gap_lo, gap_hi, busy, d);
  Placement out = place_earliest(out_regions, d);
  if (!out.ok) return false;
  busy.emplace_back(out.start, out.end);
  auto in_regions = feasible_regions(out.end, gap_hi, busy, d);
  Placement in = place_latest(in_regions, d);
  if (!in.ok) return false;

  SwapEvent out_ev = make_event(job, storage, SwapDirection::Out, out.start,
                                out.end, gap_lo, gap_hi, false, -1);
  job.plan.swap_events.push_back(out_ev);
  SwapEvent in_ev = make_event(job, storage, SwapDirection::In, in.start,
                               in.end, out.end, gap_hi, false, serves);
  in_ev.pair_id = out_ev.event_id;
  job.plan.swap_events.push_back(in_ev);
  job.plan.swap_events[job.plan.swap_events.size() - 2].pair_id =
      in_ev.event_id;
  flag_release_before(job, storage, out.start);
  return true;
}

}  // namespace

JobContext make_job_context(ComputeGraph graph,
                            const std::map<OpId, Tick>& latencies) {
  JobContext ctx;
  ctx.catalog = build_catalog(graph);
  ctx.latencies = latencies;
  ctx.seq = activity_analysis(generate_access_sequence(graph, latencies), graph);
  ctx.graph = std::move(graph);
  ctx.plan.job_id = ctx.seq.job_id;
  for (const auto& a : ctx.seq.accesses)
    if (a.release_flag) ctx.base_release_flags.insert(a.access_id);
  ctx.plan.release_flags = ctx.base_release_flags;
  ctx.refresh_report();
  return ctx;
}

void rebuild_release_flags(JobContext& job) {
  job.plan.release_flags = job.base_release_flags;
  auto flag_preceding = [&](const TensorId& storage, Tick before,
                            AccessId skip) {
    const TensorAccess* preceding = nullptr;
    for (const auto* a : storage_accesses(job, storage))
      if (a->end_time <= before && a->access_id != skip) preceding = a;
    if (preceding) job.plan.release_flags.insert(preceding->access_id);
  };
  for (const auto& e : job.plan.swap_events)
    if (e.direction == SwapDirection::Out)
      flag_preceding(job.catalog.storage(e.tensor_id), e.start_time, -2);
  for (const auto& e : job.plan.recompute_events) {
    const TensorAccess& target = job.seq.access(e.target_access);
    flag_preceding(job.catalog.storage(e.tensor_id), target.start_time,
                   e.target_access);
  }
}

void revalidate_swap_events(JobContext& job, const PlannerConfig& config) {
  const Tick period = std::max<Tick>(1, job.seq.iteration_period);

  // Re-derive absolute times from the (trigger, delta) anchors.
  std::map<std::int64_t, SwapEvent*> by_id;
  for (auto& e : job.plan.swap_events) {
    const Tick base = e.trigger_access == kIterationStartAnchor
                          ? 0
                          : job.seq.access(e.trigger_access).end_time;
    const Tick d = transfer_duration(job.catalog.storage_size(e.tensor_id),
                                     config.pcie_bandwidth,
                                     config.transfer_setup);
    Tick start = base + e.delta_time;
    if (e.wraps_iteration && e.direction == SwapDirection::In)
      start += period;
    e.start_time = start;
    e.end_time = start + d;
    by_id[e.event_id] = &e;
  }

  auto overlaps_mod = [&](Tick s1, Tick e1, Tick s2, Tick e2) {
    for (int k = -1; k <= 1; ++k) {
      const Tick shift = static_cast<Tick>(k) * period;
      if (s1 + shift < e2 && s2 < e1 + shift) return true;
    }
    return false;
  };

  // Keep pairs in event-id order; drop a pair when either side conflicts.
  std::set<std::int64_t> dropped;
  std::vector<std::pair<Tick, Tick>> kept;
  for (const auto& e : job.plan.swap_events) {
    if (e.direction != SwapDirection::Out) continue;
    const SwapEvent* in = e.pair_id >= 0 && by_id.count(e.pair_id)
                              ? by_id[e.pair_id]
                              : nullptr;
    bool ok = in != nullptr && e.end_time <= in->start_time;
    if (ok && in->serves_access >= 0) {
      const TensorAccess& served = job.seq.access(in->serves_access);
      Tick deadline = served.start_time;
      if (in->wraps_iteration) deadline += period;
      ok = in->end_time <= deadline;
    }
    if (ok) {
      for (const auto* a :
           storage_accesses(job, job.catalog.storage(e.tensor_id))) {
        if (overlaps_mod(e.start_time, e.end_time, a->start_time,
                         a->end_time) ||
            overlaps_mod(in->start_time, in->end_time, a->start_time,
                         a->end_time)) {
          ok = false;
          break;
        }
      }
    }
    if (ok) {
      for (const auto& [ks, ke] : kept) {
        if (overlaps_mod(e.start_time, e.end_time, ks, ke) ||
            overlaps_mod(in->start_time, in->end_time, ks, ke)) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) {
      dropped.insert(e.event_id);
      if (in) dropped.insert(in->event_id);
    } else {
      kept.emplace_back(e.start_time, e.end_time);
      kept.emplace_back(in->start_time, in->end_time);
    }
  }
  std::erase_if(job.plan.swap_events, [&](const SwapEvent& e) {
    return dropped.count(e.event_id) > 0;
  });
  rebuild_release_flags(job);
}

bool SwapBudget::allows(const JobId& job) const {
  if (total_swapped == 0) return true;
  auto it = max_ratio.find(job);
  const double ratio = it == max_ratio.end() ? 1.0 : it->second;
  const int son = swapped_out_count.count(job) ? swapped_out_count.at(job) : 0;
  return static_cast<double>(son + 1) /
             static_cast<double>(total_swapped + 1) <=
         ratio;
}

void SwapBudget::record(const JobId& job, const TensorId& storage) {
  swapped_out_count[job]++;
  total_swapped++;
  swapped_storages[job].insert(storage);
}

bool SwapBudget::already_swapped(const JobId& job,
                                 const TensorId& storage) const {
  auto it = swapped_storages.find(job);
  return it != swapped_storages.end() && it->second.count(storage) > 0;
}

std::pair<Tick, Tick> swap_window(const TensorId& storage,
                                  const PeakReport& report,
                                  const AccessSequence& seq,
                                  const TensorCatalog& catalog) {
  const Tick latest = report.peak_time;
  Tick earliest = -1;
  bool has_tga = false;
  for (const auto& a : seq.accesses) {
    if (catalog.storage(a.tensor_id) != storage) continue;
    if (a.type == AccessType::TGA) {
      has_tga = true;
      // The tensor does not exist before its generating access finishes;
      // the window can never open earlier.
      earliest = std::max(earliest, a.end_time);
    }
    if (a.start_time < latest) earliest = std::max(earliest, a.end_time);
  }
  // Initially resident tensors (inputs, parameters) may have no explicit TGA
  // before the peak; their window opens at iteration start.
  if (!has_tga && catalog.at(storage).kind == TensorKind::Interim)
    throw ValidationError("tensor " + storage + " has no TGA in sequence");
  if (earliest < 0) earliest = 0;
  return {earliest, latest};
}

std::vector<FeasibleRegion> feasible_regions(
    Tick window_begin, Tick window_end,
    const std::vector<std::pair<Tick, Tick>>& busy, Tick duration) {
  if (duration <= 0) throw ValidationError("duration must be positive");
  std::vector<FeasibleRegion> regions;
  if (window_end <= window_begin) return regions;
  std::vector<std::pair<Tick, Tick>> sorted;
  for (const auto& [s, e] : busy) {
    const Tick cs = std::max(s, window_begin);
    const Tick ce = std::min(e, window_end);
    if (ce > cs) sorted.emplace_back(cs, ce);
  }
  std::sort(sorted.begin(), sorted.end());
  Tick cursor = window_begin;
  for (const auto& [s, e] : sorted) {
    if (s > cursor && s - cursor >= duration)
      regions.push_back({cursor, s});
    cursor = std::max(cursor, e);
  }
  if (window_end > cursor && window_end - cursor >= duration)
    regions.push_back({cursor, window_end});
  return regions;
}

ScheduleResult schedule_swap(JobContext& job, const TensorId& storage,
                             Tick earliest, Tick& latest,
                             const PlannerConfig& config) {
  ScheduleResult result;
  const Bytes size = job.catalog.at(storage).size;
  const Tick d = transfer_duration(size, config.pcie_bandwidth,
                                   config.transfer_setup);

  auto busy = busy_intervals(job, storage, earliest, latest, {});
  auto out_regions = feasible_regions(earliest, latest, busy, d);
  Placement out = place_earliest(out_regions, d);
  if (!out.ok) return result;
  result.succeed_swap_out = true;

  const TensorAccess* first_access = nullptr;
  for (const auto* a : storage_accesses(job, storage)) {
    if (a->type == AccessType::TUA && a->start_time >= out.end) {
      first_access = a;
      break;
    }
  }
  if (!first_access) return result;
  result.have_first_access = true;

  auto in_busy = busy_intervals(job, storage, out.end,
                                first_access->start_time,
                                {{out.start, out.end}});
  auto in_regions =
      feasible_regions(out.end, first_access->start_time, in_busy, d);
  Placement in = place_latest(in_regions, d);
  if (!in.ok) {
    // No room for the swap-in: drop the swap-out and tighten the window so
    // the caller's retry searches a smaller range.
    latest = first_access->end_time;
    return result;
  }

  SwapEvent out_ev = make_event(job, storage, SwapDirection::Out, out.start,
                                out.end, earliest, latest, false, -1);
  job.plan.swap_events.push_back(out_ev);
  SwapEvent in_ev =
      make_event(job, storage, SwapDirection::In, in.start, in.end, out.end,
                 first_access->start_time, false, first_access->access_id);
  in_ev.pair_id = out_ev.event_id;
  job.plan.swap_events.push_back(in_ev);
  job.plan.swap_events[job.plan.swap_events.size() - 2].pair_id =
      in_ev.event_id;
  flag_release_before(job, storage, out.start);

  // Greedily keep the tensor offloaded between its remaining uses.
  auto accs = storage_accesses(job, storage);
  for (std::size_t i = 0; i + 1 < accs.size(); ++i) {
    if (accs[i]->access_id < first_access->access_id) continue;
    if (accs[i + 1]->type != AccessType::TUA) continue;
    try_gap_pair(job, storage, accs[i]->end_time, accs[i + 1]->start_time,
                 accs[i + 1]->access_id, config);
  }

  result.succeed = true;
  return result;
}

ScheduleResult schedule_wrapped_swap(JobContext& job, const TensorId& param,
                                     const PlannerConfig& config) {
  ScheduleResult result;
  auto updated = job.graph.updated_version_of(param);
  if (!updated) return result;
  const Bytes size = job.catalog.at(param).size;
  const Tick d = transfer_duration(size, config.pcie_bandwidth,
                                   config.transfer_setup);
  const Tick period = job.seq.iteration_period;

  // Swap-out after the update op writes the new value.
  Tick tga_end = -1;
  for (const auto& a : job.seq.accesses)
    if (a.tensor_id == *updated && a.type == AccessType::TGA)
      tga_end = a.end_time;
  if (tga_end < 0) return result;

  auto busy = busy_intervals(job, param, tga_end, period, {});
  auto out_regions = feasible_regions(tga_end, period, busy, d);
  Placement out = place_earliest(out_regions, d);
  if (!out.ok) return result;
  result.succeed_swap_out = true;

  // Swap-in before the parameter's first use in the next iteration.
  const TensorAccess* first_access = nullptr;
  for (const auto* a : storage_accesses(job, param)) {
    if (a->tensor_id == param && a->type == AccessType::TUA) {
      first_access = a;
      break;
    }
  }
  if (!first_access) return result;
  result.have_first_access = true;

  const Tick in_lo = period;
  const Tick in_hi = period + first_access->start_time;
  auto in_busy =
      busy_intervals(job, param, in_lo, in_hi, {{out.start, out.end}});
  auto in_regions = feasible_regions(in_lo, in_hi, in_busy, d);
  Placement in = place_latest(in_regions, d);
  if (!in.ok) return result;

  SwapEvent out_ev = make_event(job, param, SwapDirection::Out, out.start,
                                out.end, tga_end, period, true, -1);
  job.plan.swap_events.push_back(out_ev);
  SwapEvent in_ev = make_event(job, param, SwapDirection::In, in.start, in.end,
                               in_lo, in_hi, true, first_access->access_id);
  // Anchor the prefetch at the iteration boundary: the executor fires it as
  // soon as the new iteration starts, before any access completes.
  in_ev.trigger_access = kIterationStartAnchor;
  in_ev.delta_time = in.start - period;
  in_ev.pair_id = out_ev.event_id;
  job.plan.swap_events.push_back(in_ev);
  job.plan.swap_events[job.plan.swap_events.size() - 2].pair_id =
      in_ev.event_id;
  flag_release_before(job, param, out.start);
  result.succeed = true;
  return result;
}

bool swap_pass(std::vector<JobContext>& jobs, SwapBudget& budget,
               const PlannerConfig& config) {
  struct Candidate {
    Bytes size;
    JobId job_id;
    TensorId storage;
    std::size_t job_index;
  };
  std::vector<Candidate> candidates;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (const auto& tid : jobs[j].report.peak_tensors) {
      candidates.push_back({jobs[j].catalog.at(tid).size,
                            jobs[j].seq.job_id, tid, j});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.size != b.size) return a.size > b.size;
              if (a.job_id != b.job_id) return a.job_id < b.job_id;
              return a.storage < b.storage;
            });

  bool changed = false;
  for (const auto& c : candidates) {
    JobContext& job = jobs[c.job_index];
    if (budget.already_swapped(c.job_id, c.storage)) continue;
    if (!budget.allows(c.job_id)) continue;

    const auto& entry = job.catalog.at(c.storage);
    const bool updated_param = entry.kind == TensorKind::Parameter &&
                               job.graph.updated_version_of(c.storage).has_value();
    if (updated_param) {
      ScheduleResult r = schedule_wrapped_swap(job, c.storage, config);
      if (r.succeed) {
        budget.record(c.job_id, c.storage);
        changed = true;
      }
      continue;
    }

    if (storage_accesses(job, c.storage).size() <= 1) continue;

    auto [earliest, latest] = swap_window(c.storage, job.report, job.seq,
                                          job.catalog);
    ScheduleResult r;
    r.succeed_swap_out = true;
    r.have_first_access = true;
    int tries = 0;
    while (!r.succeed && latest > earliest && r.succeed_swap_out &&
           r.have_first_access && tries < kMaxRetries) {
      r = schedule_swap(job, c.storage, earliest, latest, config);
      ++tries;
    }
    if (r.succeed) {
      budget.record(c.job_id, c.storage);
      changed = true;
    }
  }
  return changed;
}

}  // namespace memsched
