#include "memsched/recompute_planner.hpp"

#include <algorithm>

namespace memsched {

double msps(Bytes memory_saving, Tick recompute_time) {
  if (recompute_time <= 0)
    throw ValidationError("recompute time must be positive");
  return static_cast<double>(memory_saving) /
         static_cast<double>(recompute_time);
}

namespace {

bool storage_has_release(const JobContext& job, const TensorId& storage) {
  for (const auto& a : job.seq.accesses) {
    if (job.catalog.storage(a.tensor_id) != storage) continue;
    if (job.plan.release_flags.count(a.access_id)) return true;
  }
  return false;
}

bool storage_has_swap(const JobContext& job, const TensorId& storage) {
  for (const auto& e : job.plan.swap_events)
    if (job.catalog.storage(e.tensor_id) == storage) return true;
  return false;
}

bool already_recomputed(const JobContext& job, const TensorId& tensor) {
  for (const auto& e : job.plan.recompute_events)
    if (e.tensor_id == tensor) return true;
  return false;
}

struct Candidate {
  double value = 0.0;
  JobId job_id;
  TensorId tensor;
  std::size_t job_index = 0;
  AccessId target = -1;
  AccessId preceding = -1;
  OpId regen_op;
  Tick latency = 0;
  Bytes saving = 0;
};

}  // namespace

bool recompute_pass(std::vector<JobContext>& jobs, Bytes budget_bytes,
                    const PlannerConfig& config) {
  std::vector<PeakReport> reports;
  for (const auto& j : jobs) reports.push_back(j.report);
  if (merge_global_peak(reports) < budget_bytes) return false;

  std::vector<Candidate> candidates;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const JobContext& job = jobs[j];
    for (const auto& tid : job.report.peak_tensors) {
      const auto& entry = job.catalog.at(tid);
      if (entry.kind != TensorKind::Interim) continue;
      if (storage_has_swap(job, tid) || already_recomputed(job, tid)) continue;
      const OperatorSpec* producer = job.graph.producer(tid);
      if (!producer) continue;

      // Regeneration only when every producer input stayed resident: never
      // released and never swapped out.
      bool inputs_resident = true;
      for (const auto& in : producer->inputs) {
        const TensorId in_storage = job.catalog.storage(in);
        if (storage_has_release(job, in_storage) ||
            storage_has_swap(job, in_storage)) {
          inputs_resident = false;
          break;
        }
      }
      if (!inputs_resident) continue;

      auto lat_it = job.latencies.find(producer->id);
      if (lat_it == job.latencies.end() || lat_it->second <= 0) continue;

      // Target: the first use after the peak whose preceding access of the
      // tensor already finished by peak time, so the freed span covers it.
      const TensorAccess* target = nullptr;
      const TensorAccess* preceding = nullptr;
      for (const auto& a : job.seq.accesses) {
        if (job.catalog.storage(a.tensor_id) != tid) continue;
        if (a.type == AccessType::TUA &&
            a.start_time > job.report.peak_time) {
          target = &a;
          break;
        }
        preceding = &a;
      }
      if (!target || !preceding) continue;
      if (preceding->end_time > job.report.peak_time) continue;

      Candidate c;
      c.value = msps(entry.size, lat_it->second);
      c.job_id = job.seq.job_id;
      c.tensor = tid;
      c.job_index = j;
      c.target = target->access_id;
      c.preceding = preceding->access_id;
      c.regen_op = producer->id;
      c.latency = lat_it->second;
      c.saving = entry.size;
      candidates.push_back(std::move(c));
    }
  }
  if (candidates.empty()) return false;

  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.value != b.value) return a.value > b.value;
              if (a.job_id != b.job_id) return a.job_id < b.job_id;
              return a.tensor < b.tensor;
            });
  const Candidate& best = candidates.front();
  JobContext& job = jobs[best.job_index];
  // Revalidation below may drop swap pairs; keep a copy so a regeneration
  // that ends up raising the peak can be rolled back.
  JobContext backup = job;

  RecomputeEvent ev;
  ev.event_id = job.plan.next_event_id();
  ev.job_id = best.job_id;
  ev.tensor_id = best.tensor;
  ev.target_access = best.target;
  ev.regen_op = best.regen_op;
  ev.recompute_latency = best.latency;
  ev.memory_saving = best.saving;
  job.plan.recompute_events.push_back(ev);

  // Open the regeneration gap: everything from the target onwards runs
  // `latency` ticks later.
  const Tick pivot = job.seq.access(best.target).start_time;
  for (auto& a : job.seq.accesses) {
    if (a.start_time >= pivot) {
      a.start_time += best.latency;
      a.end_time += best.latency;
    }
  }
  job.seq.iteration_period += best.latency;

  revalidate_swap_events(job, config);
  job.refresh_report();
  if (job.report.memory_peak > backup.report.memory_peak) {
    job = std::move(backup);
    return false;
  }
  return true;
}

}  // namespace memsched
