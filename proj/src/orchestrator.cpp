#include "memsched/orchestrator.hpp"

#include <algorithm>
#include <cmath>

namespace memsched {

BuildResult build_plan(
    const std::vector<std::pair<ComputeGraph, std::map<OpId, Tick>>>& jobs,
    const PlannerConfig& config) {
  config.validate();
  BuildResult result;
  if (jobs.empty()) return result;

  std::vector<JobContext> contexts;
  for (const auto& [graph, latencies] : jobs)
    contexts.push_back(make_job_context(graph, latencies));

  SwapBudget budget;
  for (const auto& ctx : contexts)
    budget.max_ratio[ctx.seq.job_id] = config.max_swap_ratio(ctx.seq.job_id);

  std::vector<double> mean_peak_history;
  bool swap_succeed = true;
  bool recompute_succeed = true;
  int iter = 0;
  while (swap_succeed || recompute_succeed) {
    for (auto& ctx : contexts) ctx.refresh_report();
    Bytes merged = 0;
    for (const auto& ctx : contexts) merged += ctx.report.memory_peak;
    result.merged_peak_history.push_back(merged);
    mean_peak_history.push_back(static_cast<double>(merged) /
                                static_cast<double>(contexts.size()));

    // Stall rule: mean per-job peak barely moved over the last 3 rounds.
    if (iter > config.stall_min_iters && mean_peak_history.size() > 3) {
      const double before =
          mean_peak_history[mean_peak_history.size() - 4];
      const double now = mean_peak_history.back();
      if (before > 0 && (before - now) / before < config.stall_epsilon) break;
    }

    if (swap_succeed) {
      swap_succeed = swap_pass(contexts, budget, config);
    } else if (merged >= config.memory_budget) {
      recompute_succeed =
          recompute_pass(contexts, config.memory_budget, config);
    } else {
      recompute_succeed = false;
    }
    ++iter;
  }

  Bytes merged = 0;
  for (auto& ctx : contexts) {
    ctx.refresh_report();
    merged += ctx.report.memory_peak;
    result.plans[ctx.seq.job_id] = ctx.plan;
    result.reports[ctx.seq.job_id] = ctx.report;
  }
  result.final_merged_peak = merged;
  result.within_budget = merged <= config.memory_budget;
  if (!result.within_budget) {
    result.diagnostic = "merged memory peak " + std::to_string(merged) +
                        " still exceeds budget " +
                        std::to_string(config.memory_budget) +
                        " after exhausting swap and recomputation";
  }
  return result;
}

std::map<OpId, Tick> predict_latencies(const ComputeGraph& graph,
                                       const LatencyPredictor& predictor,
                                       double gpu_usage) {
  const auto layouts = derive_layouts(graph);
  std::map<OpId, Tick> latencies;
  for (const auto& op : graph.ops()) {
    std::map<TensorId, std::vector<double>> dims;
    for (const auto& tid : op.inputs)
      dims[tid] = {static_cast<double>(graph.tensor(tid).size)};
    FeatureVector fv =
        extract_features(op, dims, gpu_usage, layouts.at(op.kind));
    latencies[op.id] =
        static_cast<Tick>(std::llround(predictor.predict(fv)));
  }
  return latencies;
}

Orchestrator::Orchestrator(PlannerConfig config,
                           std::vector<ComputeGraph> graphs)
    : config_(std::move(config)), graphs_(std::move(graphs)) {
  config_.validate();
  for (const auto& g : graphs_) versions_[g.job_id()] = 0;
}

BuildResult Orchestrator::rebuild() {
  std::vector<std::pair<ComputeGraph, std::map<OpId, Tick>>> jobs;
  Tick sum = 0;
  for (const auto& g : graphs_) {
    const auto& lat = latencies_.at(g.job_id());
    for (const auto& [op, t] : lat) sum += t;
    jobs.emplace_back(g, lat);
  }
  BuildResult result = build_plan(jobs, config_);
  last_plan_sum_ = sum;
  for (auto& [job, plan] : result.plans) {
    plan.version = ++versions_[job];
  }
  return result;
}

BuildResult Orchestrator::plan_with_latencies(
    const std::map<JobId, std::map<OpId, Tick>>& latencies) {
  latencies_ = latencies;
  return rebuild();
}

BuildResult Orchestrator::plan_cold_start(const LatencyPredictor& predictor) {
  latencies_.clear();
  for (const auto& g : graphs_)
    latencies_[g.job_id()] =
        predict_latencies(g, predictor, config_.cold_start_gpu_usage);
  return rebuild();
}

std::optional<std::map<JobId, SchedulingPlan>> Orchestrator::replan_if_needed(
    const std::map<JobId, std::map<OpId, Tick>>& observed) {
  Tick observed_sum = 0;
  for (const auto& [job, ops] : observed)
    for (const auto& [op, t] : ops) observed_sum += t;
  // Ops not covered by this round keep their current estimate in the sum, so
  // a partial report compares like against like.
  for (const auto& [job, ops] : latencies_) {
    auto jt = observed.find(job);
    for (const auto& [op, t] : ops) {
      if (jt == observed.end() || !jt->second.count(op)) observed_sum += t;
    }
  }

  ReplanState state;
  state.last_sum = last_plan_sum_;
  state.current_sum = observed_sum;
  state.threshold = config_.replan_threshold;

  // EWMA correction happens regardless of the trigger.
  for (const auto& [job, ops] : observed) {
    auto it = latencies_.find(job);
    if (it == latencies_.end()) continue;
    for (const auto& [op, t] : ops) {
      auto op_it = it->second.find(op);
      if (op_it != it->second.end())
        op_it->second = ewma_update(op_it->second, t, config_.ewma_alpha);
    }
  }

  if (!should_replan(state)) return std::nullopt;
  ++replan_count_;
  return rebuild().plans;
}

}  // namespace memsched
