// End-to-end acceptance checks, one pass/fail line per criterion. Runs as a
// plain binary (no test framework) so the output stays a readable checklist.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memsched/scenario.hpp"
#include "test_support.hpp"

using namespace testsup;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int n, const std::string& label, bool ok) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", n,
              label.c_str());
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

bool transfers_exclusive(const SimulationTrace& trace) {
  for (std::size_t i = 0; i < trace.transfers.size(); ++i)
    for (std::size_t j = i + 1; j < trace.transfers.size(); ++j) {
      const auto& a = trace.transfers[i];
      const auto& b = trace.transfers[j];
      if (!(a.end <= b.start || b.end <= a.start)) return false;
    }
  return true;
}

double total_mean_iteration_time(const SimulationTrace& trace) {
  double total = 0.0;
  for (const auto& [job, times] : trace.iteration_times) {
    double sum = 0.0;
    for (Tick t : times) sum += static_cast<double>(t);
    total += sum / static_cast<double>(times.size());
  }
  return total;
}

// 1. The peak analyzer agrees with an independent replay oracle on 200
//    randomly generated and randomly swap-planned jobs, in under 10 seconds.
void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  PlannerConfig config;
  config.pcie_bandwidth = 4;
  config.transfer_setup = 1;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 200 && ok; ++seed) {
    JobContext job = planned_random_job(seed, 3, config);
    OracleResult o = replay_oracle(job.seq, job.plan, job.catalog);
    ok = o.peak == job.report.memory_peak &&
         o.peak_time == job.report.peak_time &&
         o.tensors == std::set<TensorId>(job.report.peak_tensors.begin(),
                                         job.report.peak_tensors.end());
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 10.0;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "analyzer matches replay oracle on 200 random plans (%.1fs)",
                elapsed);
  report(1, buf, ok);
}

// 2. + 3. One hundred random multi-job scenarios planned at 60%% of the
//    merged baseline peak: every scheduled simulation is safe (no missing
//    tensors, exclusive transfer channel) in under 60 seconds, the planning
//    loop never raises the merged peak, and the scheduled simulation never
//    exceeds the vanilla footprint.
void criteria_2_and_3() {
  const auto t0 = std::chrono::steady_clock::now();
  bool safe = true;
  bool monotone_and_lower = true;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const int job_count = 1 + static_cast<int>(s % 3);
    std::vector<std::pair<ComputeGraph, std::map<OpId, Tick>>> jobs;
    std::vector<SimJob> sim_jobs;
    std::map<JobId, SchedulingPlan> baseline;
    Bytes merged_baseline = 0;
    for (int j = 0; j < job_count; ++j) {
      auto [g, lat] = random_job(1000 + s * 3 + static_cast<std::uint64_t>(j));
      JobContext ctx = make_job_context(g, lat);
      merged_baseline += ctx.report.memory_peak;
      baseline[g.job_id()] = ctx.plan;
      SimJob sj;
      sj.graph = g;
      sj.true_latencies = lat;
      sj.launch_tick = j * 3;
      sim_jobs.push_back(sj);
      jobs.emplace_back(std::move(g), std::move(lat));
    }

    PlannerConfig pcfg;
    pcfg.pcie_bandwidth = 8;
    pcfg.transfer_setup = 1;
    pcfg.memory_budget = merged_baseline * 6 / 10;
    BuildResult build = build_plan(jobs, pcfg);
    for (std::size_t i = 1; i < build.merged_peak_history.size(); ++i)
      if (build.merged_peak_history[i] > build.merged_peak_history[i - 1])
        monotone_and_lower = false;

    SimConfig scfg;
    scfg.iterations = 2;
    scfg.pcie_bandwidth = 8;
    scfg.transfer_setup = 1;
    scfg.mode = SimMode::Vanilla;
    SimulationTrace vanilla = simulate(sim_jobs, baseline, scfg);
    scfg.mode = SimMode::Scheduled;
    SimulationTrace scheduled = simulate(sim_jobs, build.plans, scfg);

    if (!scheduled.safety_violations.empty() ||
        !transfers_exclusive(scheduled) || scheduled.passive_swap_count != 0)
      safe = false;
    if (scheduled.peak > vanilla.peak) monotone_and_lower = false;
  }
  const double elapsed = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "100 planned scenarios simulate safely (%.1fs)", elapsed);
  report(2, buf, safe && elapsed < 60.0);
  report(3,
         "planning loop never raises the merged peak; scheduled footprint "
         "never exceeds vanilla (100/100)",
         monotone_and_lower);
}

// 4. With enough transfer slack every prefetch hides behind compute: the
//    execution overhead ratio is exactly zero and nothing falls back to an
//    on-demand fetch.
void criterion_4() {
  WorkloadSpec spec;
  spec.family = "chain";
  spec.depth = 6;
  spec.batch_size = 32;
  spec.job_id = "slack";
  ComputeGraph graph = generate_workload(spec);
  auto lat = true_latency_table(graph, 7);

  PlannerConfig pcfg;
  pcfg.pcie_bandwidth = 64;
  pcfg.transfer_setup = 1;
  pcfg.memory_budget = 1;
  BuildResult build = build_plan({{graph, lat}}, pcfg);

  SimJob sj;
  sj.graph = graph;
  sj.true_latencies = lat;
  SimConfig cfg;
  cfg.iterations = 4;
  cfg.pcie_bandwidth = 64;
  cfg.transfer_setup = 1;
  cfg.mode = SimMode::Vanilla;
  JobContext ctx = make_job_context(graph, lat);
  SimulationTrace vanilla = simulate({sj}, {{graph.job_id(), ctx.plan}}, cfg);
  cfg.mode = SimMode::Scheduled;
  SimulationTrace scheduled = simulate({sj}, build.plans, cfg);

  MetricsReport m = compute_metrics(vanilla, scheduled);
  report(4,
         "full-slack scenario: overhead ratio exactly 0, zero on-demand "
         "fetches",
         m.eor == 0.0 && scheduled.passive_swap_count == 0 && m.msr > 0.0 &&
             scheduled.safety_violations.empty());
}

// 5. Planned prefetching beats on-demand thrashing: at a budget of 70%% of
//    the vanilla peak, the scheduled run is at least as fast as the passive
//    run on every named model family, within 5 minutes total.
void criterion_5() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  for (const std::string family :
       {"vgg16", "resnet50", "inception_v3", "inception_v4", "densenet"}) {
    WorkloadSpec spec;
    spec.family = family;
    spec.batch_size = 8;
    spec.job_id = family;
    ComputeGraph graph = generate_workload(spec);
    auto lat = true_latency_table(graph, 13);
    JobContext ctx = make_job_context(graph, lat);
    const Bytes budget = ctx.report.memory_peak * 7 / 10;

    PlannerConfig pcfg;
    pcfg.pcie_bandwidth = 256;
    pcfg.transfer_setup = 1;
    pcfg.memory_budget = budget;
    BuildResult build = build_plan({{graph, lat}}, pcfg);

    SimJob sj;
    sj.graph = graph;
    sj.true_latencies = lat;
    SimConfig cfg;
    cfg.iterations = 2;
    cfg.pcie_bandwidth = 256;
    cfg.transfer_setup = 1;
    cfg.memory_budget = budget;

    cfg.mode = SimMode::Scheduled;
    SimulationTrace scheduled = simulate({sj}, build.plans, cfg);
    cfg.mode = SimMode::Passive;
    SimulationTrace passive = simulate({sj}, {{family, ctx.plan}}, cfg);

    const double sched_time = total_mean_iteration_time(scheduled);
    const double passive_time = total_mean_iteration_time(passive);
    if (!(sched_time <= passive_time) || !scheduled.safety_violations.empty())
      ok = false;
  }
  const double elapsed = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "scheduled run at 70%% budget is never slower than passive "
                "on all 5 model families (%.1fs)",
                elapsed);
  report(5, buf, ok && elapsed < 300.0);
}

// 6. Cost-benefit arithmetic against two published reference points.
void criterion_6() {
  const double a = cost_benefit_ratio(0.3483, 0.2295);
  const double b = cost_benefit_ratio(0.7468, 0.2006);
  report(6, "cost-benefit ratio matches reference values within 0.001",
         std::abs(a - 1.518) < 1e-3 && std::abs(b - 3.722) < 1e-3);
}

// 7. Drift response: a 25%% latency drift triggers exactly one replan and
//    bumps the plan version by one; a 5%% drift triggers none.
void criterion_7() {
  WorkloadSpec spec;
  spec.family = "chain";
  spec.depth = 4;
  spec.batch_size = 4;
  spec.job_id = "drift";
  ComputeGraph graph = generate_workload(spec);
  auto base = true_latency_table(graph, 21);

  PlannerConfig cfg;
  cfg.pcie_bandwidth = 64;
  cfg.transfer_setup = 1;
  cfg.memory_budget = 100;
  cfg.replan_threshold = 0.2;
  cfg.ewma_alpha = 1.0;

  bool ok = true;
  {
    Orchestrator orch(cfg, {graph});
    BuildResult first = orch.plan_with_latencies({{"drift", base}});
    ok = ok && first.plans.at("drift").version == 1;
    std::map<OpId, Tick> drifted = base;
    for (auto& [op, t] : drifted)
      t = static_cast<Tick>(std::llround(static_cast<double>(t) * 1.25));
    auto replanned = orch.replan_if_needed({{"drift", drifted}});
    ok = ok && replanned.has_value() && orch.replan_count() == 1 &&
         replanned->at("drift").version == 2;
    ok = ok && !orch.replan_if_needed({{"drift", drifted}}).has_value() &&
         orch.replan_count() == 1;
  }
  {
    Orchestrator orch(cfg, {graph});
    orch.plan_with_latencies({{"drift", base}});
    std::map<OpId, Tick> drifted = base;
    for (auto& [op, t] : drifted)
      t = static_cast<Tick>(std::llround(static_cast<double>(t) * 1.05));
    ok = ok && !orch.replan_if_needed({{"drift", drifted}}).has_value() &&
         orch.replan_count() == 0;
  }
  report(7, "25% drift replans exactly once (version +1), 5% drift never",
         ok);
}

// 8. A parameter swapped out after its update and prefetched across the
//    iteration boundary is never fetched on demand during a multi-iteration
//    run.
void criterion_8() {
  WorkloadSpec spec;
  spec.family = "chain";
  spec.depth = 3;
  spec.batch_size = 4;
  spec.job_id = "wrap";
  ComputeGraph graph = generate_workload(spec);
  auto lat = true_latency_table(graph, 5);
  JobContext job = make_job_context(graph, lat);

  PlannerConfig cfg;
  cfg.pcie_bandwidth = 64;
  cfg.transfer_setup = 1;

  TensorId wrapped;
  for (const auto& t : job.graph.tensors()) {
    if (t.kind != TensorKind::Parameter) continue;
    if (!job.graph.updated_version_of(t.id).has_value()) continue;
    if (schedule_wrapped_swap(job, t.id, cfg).succeed) {
      wrapped = t.id;
      break;
    }
  }
  bool has_pair = false;
  for (const auto& ev : job.plan.swap_events)
    if (ev.wraps_iteration && job.catalog.storage(ev.tensor_id) == wrapped)
      has_pair = true;

  SimJob sj;
  sj.graph = graph;
  sj.true_latencies = lat;
  SimConfig scfg;
  scfg.mode = SimMode::Scheduled;
  scfg.iterations = 3;
  scfg.pcie_bandwidth = 64;
  scfg.transfer_setup = 1;
  SimulationTrace trace = simulate({sj}, {{"wrap", job.plan}}, scfg);

  bool no_stall = true;
  for (const auto& [jid, iter, tid] : trace.passive_events)
    if (job.catalog.storage(tid) == wrapped) no_stall = false;
  report(8,
         "cross-iteration parameter prefetch never falls back to an "
         "on-demand fetch",
         !wrapped.empty() && has_pair && no_stall &&
             trace.safety_violations.empty() &&
             trace.iteration_times.at("wrap").size() == 3);
}

// 9. Latency regression quality: r^2 >= 0.99 on noiseless samples and
//    >= 0.9 with 10% multiplicative label noise, for every op kind.
void criterion_9() {
  WorkloadSpec spec;
  spec.family = "chain";
  spec.depth = 5;
  spec.batch_size = 8;
  ComputeGraph graph = generate_workload(spec);

  auto min_r2 = [&](double noise) {
    auto samples = generate_training_samples(graph, 31, 40, noise);
    LatencyPredictor p = LatencyPredictor::fit(samples);
    double worst = 1.0;
    for (const auto& op : graph.ops())
      worst = std::min(worst, p.r2(op.kind));
    return worst;
  };
  report(9, "latency fit r^2 >= 0.99 noiseless, >= 0.9 at 10% noise",
         min_r2(0.0) >= 0.99 && min_r2(0.10) >= 0.9);
}

// 10. Determinism: rerunning a full scenario reproduces every artifact
//     byte for byte.
void criterion_10() {
  fs::path dir = fs::temp_directory_path() /
                 ("memsched_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  WorkloadSpec spec;
  spec.family = "chain";
  spec.depth = 5;
  spec.batch_size = 16;
  spec.job_id = "det";
  ComputeGraph g = generate_workload(spec);
  {
    std::ofstream out(dir / "graph.json", std::ios::binary);
    out << save_graph(g);
  }
  nlohmann::ordered_json latdoc;
  for (const auto& [op, t] : true_latency_table(g, 3)) latdoc["det"][op] = t;
  {
    std::ofstream out(dir / "latency.json", std::ios::binary);
    out << latdoc.dump(2);
  }
  nlohmann::ordered_json doc;
  doc["pcie_bandwidth"] = 64;
  doc["transfer_setup"] = 1;
  doc["memory_budget"] = 1500;
  doc["iterations"] = 3;
  doc["seed"] = 3;
  doc["latency_file"] = "latency.json";
  doc["jobs"] = {{{"graph_file", "graph.json"}}};

  ScenarioConfig cfg = load_scenario(doc.dump(), dir.string());
  auto run = [&] {
    return run_scenario(cfg, {"vanilla", "scheduled", "passive"});
  };
  ScenarioResult a = run();
  ScenarioResult b = run();
  bool ok = save_plans(a.plans) == save_plans(b.plans);
  for (const auto& mode : {"vanilla", "scheduled", "passive"})
    ok = ok && a.traces.at(mode).to_csv() == b.traces.at(mode).to_csv();
  ok = ok && summary_table(a.stats, "csv") == summary_table(b.stats, "csv") &&
       summary_table(a.stats, "json") == summary_table(b.stats, "json");
  fs::remove_all(dir);
  report(10, "full scenario rerun is byte-identical", ok);
}

}  // namespace

int main() {
  criterion_1();
  criteria_2_and_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  if (failures) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
