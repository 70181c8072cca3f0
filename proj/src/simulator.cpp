#include "memsched/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memsched/access.hpp"
#include "memsched/peak.hpp"

namespace memsched {

double SimConfig::slowdown(int concurrent_jobs) const {
  double mult = 1.0;
  for (const auto& [count, m] : gpu_slowdown_curve) {
    if (count <= concurrent_jobs) mult = m;
  }
  return mult;
}

namespace {

struct Step {
  OpId op;
  bool recompute = false;
  TensorId recompute_tensor;
  std::vector<AccessId> access_ids;            // empty for recompute steps
  std::vector<TensorId> input_storages;
  std::vector<std::pair<TensorId, Bytes>> allocs;  // storage, size (TGAs)
};

enum class TransferKind { SwapOut, SwapIn, PassiveIn };

struct Transfer {
  std::size_t job_index = 0;
  TensorId storage;
  Bytes size = 0;
  Tick duration = 0;
  TransferKind kind = TransferKind::SwapOut;
  Tick arrival = 0;
  std::uint64_t seq = 0;
  JobId job_id;
};

// Op completions run first at a tick: their releases must land before any
// same-tick swap-in allocation, mirroring the analyzer's frees-first rule.
enum EventKind {
  kOpComplete = 0,
  kTransferComplete = 1,
  kTransferArrival = 2,
  kJobLaunch = 3,
};

struct Event {
  Tick tick = 0;
  int kind = 0;
  JobId job_id;      // deterministic tiebreak
  std::uint64_t seq = 0;
  std::size_t job_index = 0;
  std::size_t payload = 0;  // transfer index for arrivals

  bool operator>(const Event& o) const {
    if (tick != o.tick) return tick > o.tick;
    if (kind != o.kind) return kind > o.kind;
    if (job_id != o.job_id) return job_id > o.job_id;
    return seq > o.seq;
  }
};

struct JobState {
  enum class S {
    NotLaunched,
    Ready,
    WaitingInputs,
    Running,
    IterEndWait,
    Finished
  };

  std::size_t index = 0;
  JobId id;
  const SimJob* job = nullptr;
  TensorCatalog catalog;
  SchedulingPlan plan;
  std::optional<SchedulingPlan> pending_plan;
  std::vector<Step> steps;
  std::map<AccessId, std::vector<SwapEvent>> triggered;
  std::vector<SwapEvent> iter_start_events;
  std::map<TensorId, int> outs_per_iteration;

  S state = S::NotLaunched;
  std::size_t step_idx = 0;
  int iteration = 0;
  Tick iter_start = 0;
  Tick wait_start = 0;
  bool compute_done = false;  // all steps of the iteration finished
  int outstanding_transfers = 0;
  std::map<TensorId, int> pending_swap_ins;
  std::map<TensorId, int> outs_remaining;
  std::map<OpId, Tick> observed;
  std::set<TensorId> resident;
  std::set<TensorId> host;
  std::set<TensorId> pinned;  // in use by the running op
  std::map<TensorId, Tick> last_use;
  Bytes footprint = 0;
};

class Engine {
 public:
  Engine(const std::vector<SimJob>& jobs,
         const std::map<JobId, SchedulingPlan>& plans, const SimConfig& config,
         SimController* controller)
      : config_(config), controller_(controller) {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      JobState js;
      js.index = i;
      js.id = jobs[i].graph.job_id();
      js.job = &jobs[i];
      js.catalog = build_catalog(jobs[i].graph);
      auto it = plans.find(js.id);
      js.plan = it != plans.end() ? it->second : SchedulingPlan{};
      prepare(js);
      states_.push_back(std::move(js));
      push({jobs[i].launch_tick, kJobLaunch, states_.back().id, next_seq_++,
            i, 0});
    }
  }

  SimulationTrace run() {
    while (!events_.empty()) {
      now_ = events_.top().tick;
      // Drain every event at this tick before dispatching new work, so
      // frees from completing ops precede the tick's fresh allocations.
      while (!events_.empty() && events_.top().tick == now_) {
        Event e = events_.top();
        events_.pop();
        switch (e.kind) {
          case kJobLaunch: launch(states_[e.job_index]); break;
          case kOpComplete: finish_step(states_[e.job_index]); break;
          case kTransferArrival: channel_queue_.insert(e.payload); break;
          case kTransferComplete: finish_transfer(); break;
        }
      }
      pump();
    }
    for (const auto& js : states_) {
      if (js.state != JobState::S::Finished) {
        std::ostringstream oss;
        oss << "deadlock: job " << js.id << " stuck";
        if (js.state == JobState::S::WaitingInputs) {
          oss << " waiting for inputs of step " << js.step_idx;
        } else if (js.state == JobState::S::IterEndWait) {
          oss << " waiting for " << js.outstanding_transfers << " transfers";
        }
        throw ValidationError(oss.str());
      }
    }
    trace_.peak = peak_;
    return std::move(trace_);
  }

 private:
  // Step list, trigger map and per-iteration swap-out counts for a plan.
  void prepare(JobState& js) {
    js.steps.clear();
    js.triggered.clear();
    js.iter_start_events.clear();
    js.outs_per_iteration.clear();

    const ComputeGraph& g = js.job->graph;
    AccessSequence seq = generate_access_sequence(g, js.job->true_latencies);
    std::map<OpId, Step> by_op;
    std::vector<OpId> order = topological_order(g);
    std::map<AccessId, OpId> access_op;
    for (const auto& a : seq.accesses) access_op[a.access_id] = a.op_id;

    std::map<OpId, std::vector<AccessId>> op_accesses;
    for (const auto& a : seq.accesses)
      op_accesses[a.op_id].push_back(a.access_id);

    std::map<OpId, std::vector<const RecomputeEvent*>> recomputes_before;
    for (const auto& ev : js.plan.recompute_events)
      recomputes_before[access_op.at(ev.target_access)].push_back(&ev);

    for (const auto& oid : order) {
      for (const auto* ev : recomputes_before[oid]) {
        const OperatorSpec& regen = g.op(ev->regen_op);
        Step s;
        s.op = regen.id;
        s.recompute = true;
        s.recompute_tensor = js.catalog.storage(ev->tensor_id);
        for (const auto& in : regen.inputs)
          s.input_storages.push_back(js.catalog.storage(in));
        s.allocs.emplace_back(s.recompute_tensor,
                              js.catalog.at(s.recompute_tensor).size);
        js.steps.push_back(std::move(s));
      }
      const OperatorSpec& op = g.op(oid);
      Step s;
      s.op = oid;
      s.access_ids = op_accesses[oid];
      for (const auto& in : op.inputs)
        s.input_storages.push_back(js.catalog.storage(in));
      for (const auto& out : op.outputs) {
        if (js.catalog.is_aliased(out)) continue;  // in-place update
        s.allocs.emplace_back(out, js.catalog.at(out).size);
      }
      js.steps.push_back(std::move(s));
    }

    if (config_.mode == SimMode::Scheduled) {
      for (const auto& ev : js.plan.swap_events) {
        if (ev.trigger_access == kIterationStartAnchor)
          js.iter_start_events.push_back(ev);
        else
          js.triggered[ev.trigger_access].push_back(ev);
        if (ev.direction == SwapDirection::Out)
          js.outs_per_iteration[js.catalog.storage(ev.tensor_id)]++;
      }
    }
  }

  void push(Event e) { events_.push(std::move(e)); }

  void record(const JobState& js, const std::string& kind,
              const TensorId& tensor) {
    trace_.rows.push_back({now_, js.id, kind, tensor, global_footprint_});
    trace_.footprint_curve.emplace_back(now_, global_footprint_);
    auto& curve = trace_.per_job_curve[js.id];
    curve.emplace_back(now_, js.footprint);
    if (global_footprint_ > peak_) peak_ = global_footprint_;
    auto& jp = trace_.per_job_peak[js.id];
    jp = std::max(jp, js.footprint);
  }

  void alloc(JobState& js, const TensorId& storage, Bytes size,
             const std::string& kind) {
    if (js.resident.count(storage)) return;
    if (config_.mode == SimMode::Passive) evict_for(js, size);
    js.resident.insert(storage);
    js.footprint += size;
    global_footprint_ += size;
    js.last_use[storage] = now_;
    record(js, kind, storage);
  }

  void free_storage(JobState& js, const TensorId& storage,
                    const std::string& kind) {
    if (!js.resident.count(storage)) {
      if (js.host.count(storage)) {
        js.host.erase(storage);
        return;
      }
      trace_.safety_violations.push_back("double release of " + storage +
                                         " in job " + js.id);
      return;
    }
    const Bytes size = js.catalog.at(storage).size;
    js.resident.erase(storage);
    js.footprint -= size;
    global_footprint_ -= size;
    record(js, kind, storage);
  }

  // LRU eviction across all jobs until `incoming` fits under the budget.
  void evict_for(JobState& requester, Bytes incoming) {
    while (global_footprint_ + incoming > config_.memory_budget) {
      JobState* victim_job = nullptr;
      TensorId victim;
      Tick oldest = std::numeric_limits<Tick>::max();
      for (auto& js : states_) {
        for (const auto& storage : js.resident) {
          if (js.pinned.count(storage)) continue;
          Tick used = js.last_use.count(storage) ? js.last_use.at(storage) : 0;
          if (used < oldest ||
              (used == oldest && victim_job && storage < victim)) {
            oldest = used;
            victim_job = &js;
            victim = storage;
          }
        }
      }
      if (!victim_job) break;  // nothing evictable, run over budget
      victim_job->host.insert(victim);
      free_storage(*victim_job, victim, "evict");
    }
  }

  void launch(JobState& js) {
    js.state = JobState::S::Ready;
    js.iteration = 0;
    active_jobs_++;
    // Parameters, model inputs and outputs are framework-preallocated; they
    // are resident from launch, matching the analyzer's initial footprint.
    // Storages with an across-iteration prefetch stay on the host instead
    // and arrive through the channel, the same as in steady state.
    std::set<TensorId> wrapped_in;
    for (const auto& ev : js.plan.swap_events)
      if (ev.direction == SwapDirection::In && ev.wraps_iteration)
        wrapped_in.insert(js.catalog.storage(ev.tensor_id));
    for (const auto& [id, entry] : js.catalog.entries) {
      if (entry.storage != id) continue;
      if (entry.kind != TensorKind::Parameter &&
          entry.kind != TensorKind::Input && entry.kind != TensorKind::Output)
        continue;
      if (wrapped_in.count(id)) continue;
      alloc(js, id, entry.size, "launch");
    }
    start_iteration(js);
  }

  void start_iteration(JobState& js) {
    js.iter_start = now_;
    js.step_idx = 0;
    js.compute_done = false;
    js.outs_remaining = js.outs_per_iteration;
    js.state = JobState::S::Ready;
    for (const auto& ev : js.iter_start_events) schedule_transfer(js, ev);
  }

  void schedule_transfer(JobState& js, const SwapEvent& ev) {
    Transfer t;
    t.job_index = js.index;
    t.job_id = js.id;
    t.storage = js.catalog.storage(ev.tensor_id);
    t.size = js.catalog.at(t.storage).size;
    t.duration =
        transfer_duration(t.size, config_.pcie_bandwidth, config_.transfer_setup);
    t.kind = ev.direction == SwapDirection::Out ? TransferKind::SwapOut
                                                : TransferKind::SwapIn;
    t.arrival = now_ + ev.delta_time;
    t.seq = next_seq_++;
    transfers_.push_back(t);
    js.outstanding_transfers++;
    if (t.kind == TransferKind::SwapIn) js.pending_swap_ins[t.storage]++;
    push({t.arrival, kTransferArrival, js.id, t.seq, js.index,
          transfers_.size() - 1});
  }

  void issue_passive(JobState& js, const TensorId& storage) {
    Transfer t;
    t.job_index = js.index;
    t.job_id = js.id;
    t.storage = storage;
    t.size = js.catalog.at(storage).size;
    t.duration =
        transfer_duration(t.size, config_.pcie_bandwidth, config_.transfer_setup);
    t.kind = TransferKind::PassiveIn;
    t.arrival = now_;
    t.seq = next_seq_++;
    transfers_.push_back(t);
    js.outstanding_transfers++;
    js.pending_swap_ins[storage]++;
    trace_.passive_swap_count++;
    trace_.passive_events.emplace_back(js.id, js.iteration, storage);
    // Through the arrival event, not straight into the queue: the channel
    // dispatch for this tick may already have run.
    push({now_, kTransferArrival, js.id, t.seq, js.index,
          transfers_.size() - 1});
    record(js, "passive_swap_in_issued", storage);
  }

  void pump() {
    // Channel: strict FIFO by arrival tick, ties by job then sequence.
    if (!channel_busy_ && !channel_queue_.empty()) {
      std::size_t best = *channel_queue_.begin();
      for (std::size_t idx : channel_queue_) {
        const Transfer& a = transfers_[idx];
        const Transfer& b = transfers_[best];
        if (a.arrival < b.arrival ||
            (a.arrival == b.arrival &&
             (a.job_id < b.job_id ||
              (a.job_id == b.job_id && a.seq < b.seq))))
          best = idx;
      }
      channel_queue_.erase(best);
      channel_busy_ = true;
      current_transfer_ = best;
      const Transfer& t = transfers_[best];
      trace_.transfers.push_back(
          {now_, now_ + t.duration, t.job_id, t.storage,
           t.kind == TransferKind::SwapOut
               ? "swap_out"
               : (t.kind == TransferKind::SwapIn ? "swap_in"
                                                 : "passive_swap_in")});
      push({now_ + t.duration, kTransferComplete, t.job_id, t.seq,
            t.job_index, best});
    }
    for (auto& js : states_) {
      if (js.state == JobState::S::Ready ||
          js.state == JobState::S::WaitingInputs)
        try_start_step(js);
    }
  }

  int running_jobs() const { return active_jobs_; }

  void try_start_step(JobState& js) {
    const Step& step = js.steps[js.step_idx];
    bool all_resident = true;
    for (const auto& storage : step.input_storages) {
      if (js.resident.count(storage)) continue;
      if (js.pending_swap_ins.count(storage) &&
          js.pending_swap_ins[storage] > 0) {
        all_resident = false;  // a prefetch or passive fetch is on the way
        continue;
      }
      if (js.host.count(storage)) {
        issue_passive(js, storage);
        all_resident = false;
        continue;
      }
      // Lost tensor: log the unsafe read, then materialize it so the run
      // can finish and report every violation instead of just the first.
      trace_.safety_violations.push_back("read of non-resident tensor " +
                                         storage + " without host copy, job " +
                                         js.id + " op " + step.op);
      alloc(js, storage, js.catalog.at(storage).size, "error_materialize");
    }
    if (!all_resident) {
      if (js.state != JobState::S::WaitingInputs) {
        js.state = JobState::S::WaitingInputs;
        js.wait_start = now_;
      }
      return;
    }
    if (js.state == JobState::S::WaitingInputs)
      trace_.blocked_ticks += now_ - js.wait_start;
    js.state = JobState::S::Running;
    js.pinned.clear();
    for (const auto& s : step.input_storages) js.pinned.insert(s);
    for (const auto& [s, sz] : step.allocs) js.pinned.insert(s);
    // Outputs occupy memory for the whole op execution, as in the analyzer.
    for (const auto& [storage, size] : step.allocs)
      alloc(js, storage, size, step.recompute ? "recompute" : "tga");
    const Tick base = js.job->true_latencies.at(step.op);
    const Tick duration = static_cast<Tick>(std::llround(
        static_cast<double>(base) * config_.slowdown(running_jobs())));
    js.observed[step.op] = duration;
    push({now_ + duration, kOpComplete, js.id, next_seq_++, js.index, 0});
  }

  void finish_step(JobState& js) {
    const Step& step = js.steps[js.step_idx];
    for (const auto& storage : step.input_storages)
      js.last_use[storage] = now_;
    for (const auto& [storage, size] : step.allocs)
      js.last_use[storage] = now_;
    js.pinned.clear();

    for (const AccessId aid : step.access_ids) {
      auto it = js.triggered.find(aid);
      if (it != js.triggered.end()) {
        for (const auto& ev : it->second) schedule_transfer(js, ev);
      }
    }
    for (const AccessId aid : step.access_ids) {
      if (!js.plan.release_flags.count(aid)) continue;
      const TensorId storage = js.catalog.storage(access_tensor(js, aid));
      if (js.outs_remaining.count(storage) && js.outs_remaining[storage] > 0)
        continue;  // the pending swap-out owns this eviction
      if (js.resident.count(storage)) {
        js.host.erase(storage);  // plain release drops the data
        free_storage(js, storage, "release");
      }
    }

    js.step_idx++;
    if (js.step_idx < js.steps.size()) {
      js.state = JobState::S::Ready;
      try_start_step(js);
      return;
    }
    js.compute_done = true;
    if (js.outstanding_transfers > 0) {
      js.state = JobState::S::IterEndWait;
      js.wait_start = now_;
    } else {
      complete_iteration(js);
    }
  }

  const TensorId& access_tensor(JobState& js, AccessId aid) {
    auto key = std::make_pair(js.index, aid);
    auto it = access_tensor_cache_.find(key);
    if (it == access_tensor_cache_.end()) {
      AccessSequence seq =
          generate_access_sequence(js.job->graph, js.job->true_latencies);
      for (const auto& a : seq.accesses)
        access_tensor_cache_[{js.index, a.access_id}] = a.tensor_id;
      it = access_tensor_cache_.find(key);
    }
    return it->second;
  }

  void complete_iteration(JobState& js) {
    const Tick elapsed = now_ - js.iter_start;
    if (elapsed > config_.ticks_per_iteration_limit)
      throw ValidationError("iteration tick limit exceeded for job " + js.id);
    trace_.iteration_times[js.id].push_back(elapsed);
    trace_.plan_versions[js.id].push_back(js.plan.version);
    if (controller_) {
      auto new_plans =
          controller_->on_iteration_end(js.id, js.iteration, js.observed);
      if (new_plans) {
        for (auto& other : states_) {
          auto it = new_plans->find(other.id);
          if (it != new_plans->end()) other.pending_plan = it->second;
        }
      }
    }
    js.observed.clear();
    js.iteration++;
    if (js.iteration >= config_.iterations) {
      js.state = JobState::S::Finished;
      active_jobs_--;
      record(js, "job_finished", "");
      return;
    }
    if (js.pending_plan) {
      js.plan = std::move(*js.pending_plan);
      js.pending_plan.reset();
      prepare(js);
    }
    start_iteration(js);
  }

  void finish_transfer() {
    const Transfer& t = transfers_[current_transfer_];
    channel_busy_ = false;
    JobState& js = states_[t.job_index];
    js.outstanding_transfers--;
    if (t.kind == TransferKind::SwapOut) {
      js.host.insert(t.storage);
      if (js.outs_remaining.count(t.storage)) js.outs_remaining[t.storage]--;
      if (js.resident.count(t.storage)) {
        free_storage(js, t.storage, "swap_out");
      }
    } else {
      js.pending_swap_ins[t.storage]--;
      alloc(js, t.storage, t.size,
            t.kind == TransferKind::SwapIn ? "swap_in" : "passive_swap_in");
    }
    if (js.state == JobState::S::IterEndWait && js.outstanding_transfers == 0) {
      trace_.blocked_ticks += now_ - js.wait_start;
      complete_iteration(js);
    }
  }

  const SimConfig& config_;
  SimController* controller_;
  std::vector<JobState> states_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::vector<Transfer> transfers_;
  std::set<std::size_t> channel_queue_;
  bool channel_busy_ = false;
  std::size_t current_transfer_ = 0;
  std::uint64_t next_seq_ = 0;
  Tick now_ = 0;
  Bytes global_footprint_ = 0;
  Bytes peak_ = 0;
  int active_jobs_ = 0;
  SimulationTrace trace_;
  std::map<std::pair<std::size_t, AccessId>, TensorId> access_tensor_cache_;
};

}  // namespace

SimulationTrace simulate(const std::vector<SimJob>& jobs,
                         const std::map<JobId, SchedulingPlan>& plans,
                         const SimConfig& config, SimController* controller) {
  if (config.iterations < 1)
    throw ValidationError("iterations must be at least 1");
  for (const auto& [count, m] : config.gpu_slowdown_curve)
    if (m < 1.0) throw ValidationError("slowdown multipliers must be >= 1");
  Engine engine(jobs, plans, config, controller);
  return engine.run();
}

std::string SimulationTrace::to_csv() const {
  std::ostringstream oss;
  oss << "tick,job_id,event_kind,tensor_id,footprint_bytes\n";
  for (const auto& r : rows) {
    oss << r.tick << ',' << r.job_id << ',' << r.event_kind << ','
        << r.tensor_id << ',' << r.footprint << '\n';
  }
  return oss.str();
}

double cost_benefit_ratio(double msr, double eor) {
  if (eor == 0.0) return std::numeric_limits<double>::infinity();
  return msr / eor;
}

MetricsReport compute_metrics(const SimulationTrace& vanilla,
                              const SimulationTrace& experimental) {
  auto jobs_of = [](const SimulationTrace& t) {
    std::set<JobId> jobs;
    for (const auto& [job, times] : t.iteration_times) jobs.insert(job);
    return jobs;
  };
  if (jobs_of(vanilla) != jobs_of(experimental))
    throw ValidationError("traces cover different job sets");

  auto time_cost = [](const SimulationTrace& t) {
    double total = 0.0;
    for (const auto& [job, times] : t.iteration_times) {
      if (times.empty()) continue;
      double sum = 0.0;
      for (Tick x : times) sum += static_cast<double>(x);
      total += sum / static_cast<double>(times.size());
    }
    return total;
  };

  const double vmp = static_cast<double>(vanilla.peak);
  const double emp = static_cast<double>(experimental.peak);
  const double vtc = time_cost(vanilla);
  const double etc = time_cost(experimental);
  if (vmp <= 0.0) throw ValidationError("vanilla peak must be positive");
  if (vtc <= 0.0) throw ValidationError("vanilla time cost must be positive");

  MetricsReport report;
  report.msr = (vmp - emp) / vmp;
  report.eor = (etc - vtc) / vtc;
  report.cbr = cost_benefit_ratio(report.msr, report.eor);
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["msr"] = msr;
  doc["eor"] = eor;
  if (std::isinf(cbr))
    doc["cbr"] = "inf";
  else
    doc["cbr"] = cbr;
  return doc.dump(2) + "\n";
}

}  // namespace memsched
