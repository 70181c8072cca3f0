#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_support.hpp"

using namespace testsup;

namespace {

SimJob make_sim_job(const ComputeGraph& graph,
                    const std::map<OpId, Tick>& latencies,
                    Tick launch = 0) {
  SimJob j;
  j.graph = graph;
  j.true_latencies = latencies;
  j.launch_tick = launch;
  return j;
}

// Release-at-last-use plan, what the framework does with no scheduler.
std::map<JobId, SchedulingPlan> baseline(const ComputeGraph& graph,
                                         const std::map<OpId, Tick>& lat) {
  JobContext ctx = make_job_context(graph, lat);
  return {{graph.job_id(), ctx.plan}};
}

void check_transfer_exclusivity(const SimulationTrace& trace) {
  for (std::size_t i = 0; i < trace.transfers.size(); ++i)
    for (std::size_t j = i + 1; j < trace.transfers.size(); ++j) {
      const auto& a = trace.transfers[i];
      const auto& b = trace.transfers[j];
      CAPTURE(i);
      CAPTURE(j);
      CHECK((a.end <= b.start || b.end <= a.start));
    }
}

}  // namespace

TEST_CASE("vanilla chain: iteration time is the latency sum, peak matches the analyzer") {
  WorkloadSpec spec;
  spec.family = "chain";
  spec.depth = 4;
  spec.batch_size = 1;
  spec.job_id = "van";
  ComputeGraph graph = generate_workload(spec);
  std::map<OpId, Tick> lat;
  Tick total = 0;
  for (const auto& op : graph.ops()) {
    lat[op.id] = 7;
    total += 7;
  }

  SimConfig cfg;
  cfg.mode = SimMode::Vanilla;
  cfg.iterations = 3;
  SimulationTrace trace = simulate({make_sim_job(graph, lat)}, baseline(graph, lat), cfg);

  REQUIRE(trace.iteration_times.at("van").size() == 3);
  for (Tick t : trace.iteration_times.at("van")) CHECK(t == total);
  CHECK(trace.passive_swap_count == 0);
  CHECK(trace.safety_violations.empty());

  JobContext ctx = make_job_context(graph, lat);
  CHECK(trace.peak == ctx.report.memory_peak);
  CHECK(trace.per_job_peak.at("van") == trace.peak);
}

TEST_CASE("scheduled run with slack: planner peak realized, zero overhead") {
  WorkloadSpec spec;
  spec.family = "chain";
  spec.depth = 6;
  spec.batch_size = 32;
  spec.job_id = "sched";
  ComputeGraph graph = generate_workload(spec);
  auto lat = true_latency_table(graph, 7);

  PlannerConfig pcfg;
  pcfg.pcie_bandwidth = 64;
  pcfg.transfer_setup = 1;
  pcfg.memory_budget = 1;  // push swapping as far as it goes
  BuildResult build = build_plan({{graph, lat}}, pcfg);

  SimConfig cfg;
  cfg.iterations = 4;
  cfg.pcie_bandwidth = 64;
  cfg.transfer_setup = 1;

  cfg.mode = SimMode::Vanilla;
  SimulationTrace vanilla =
      simulate({make_sim_job(graph, lat)}, baseline(graph, lat), cfg);

  cfg.mode = SimMode::Scheduled;
  SimulationTrace scheduled =
      simulate({make_sim_job(graph, lat)}, build.plans, cfg);

  CHECK(scheduled.safety_violations.empty());
  CHECK(scheduled.passive_swap_count == 0);
  CHECK(scheduled.peak == build.final_merged_peak);
  CHECK(scheduled.peak < vanilla.peak);
  check_transfer_exclusivity(scheduled);

  MetricsReport m = compute_metrics(vanilla, scheduled);
  CHECK(m.msr > 0.0);
  CHECK(m.eor == 0.0);
  CHECK(std::isinf(m.cbr));
  CHECK(m.to_json().find("\"cbr\": \"inf\"") != std::string::npos);
}

TEST_CASE("two jobs share one transfer channel exclusively") {
  auto [g1, l1] = random_job(41);
  auto [g2, l2] = random_job(42);
  PlannerConfig pcfg;
  pcfg.pcie_bandwidth = 2;  // slow channel forces queueing
  pcfg.transfer_setup = 2;
  pcfg.memory_budget = 1;
  BuildResult build = build_plan({{g1, l1}, {g2, l2}}, pcfg);

  SimConfig cfg;
  cfg.mode = SimMode::Scheduled;
  cfg.iterations = 3;
  cfg.pcie_bandwidth = 2;
  cfg.transfer_setup = 2;
  SimulationTrace trace = simulate(
      {make_sim_job(g1, l1), make_sim_job(g2, l2, 5)}, build.plans, cfg);

  CHECK(trace.safety_violations.empty());
  check_transfer_exclusivity(trace);
  CHECK(trace.iteration_times.at(g1.job_id()).size() == 3);
  CHECK(trace.iteration_times.at(g2.job_id()).size() == 3);

  // Global peak never exceeds the planner's merged worst case.
  CHECK(trace.peak <= build.final_merged_peak);
}

TEST_CASE("passive mode thrashes through a tiny budget but completes") {
  WorkloadSpec spec;
  spec.family = "chain";
  spec.depth = 4;
  spec.batch_size = 8;
  spec.job_id = "pas";
  ComputeGraph graph = generate_workload(spec);
  auto lat = true_latency_table(graph, 9);

  JobContext ctx = make_job_context(graph, lat);
  SimConfig cfg;
  cfg.mode = SimMode::Passive;
  cfg.iterations = 2;
  cfg.pcie_bandwidth = 32;
  cfg.memory_budget = ctx.report.memory_peak / 2;

  SimulationTrace trace =
      simulate({make_sim_job(graph, lat)}, baseline(graph, lat), cfg);
  CHECK(trace.iteration_times.at("pas").size() == 2);
  CHECK(trace.passive_swap_count > 0);
  CHECK(trace.safety_violations.empty());
  check_transfer_exclusivity(trace);
  // On-demand reloads pay real time: slower than vanilla.
  SimConfig vcfg = cfg;
  vcfg.mode = SimMode::Vanilla;
  SimulationTrace vanilla =
      simulate({make_sim_job(graph, lat)}, baseline(graph, lat), vcfg);
  MetricsReport m = compute_metrics(vanilla, trace);
  CHECK(m.eor > 0.0);
}

TEST_CASE("identical inputs produce identical traces") {
  auto [g, l] = random_job(55);
  PlannerConfig pcfg;
  pcfg.pcie_bandwidth = 4;
  pcfg.transfer_setup = 1;
  pcfg.memory_budget = 1;
  BuildResult build = build_plan({{g, l}}, pcfg);

  SimConfig cfg;
  cfg.mode = SimMode::Scheduled;
  cfg.iterations = 3;
  cfg.seed = 9;
  cfg.pcie_bandwidth = 4;
  cfg.transfer_setup = 1;
  SimulationTrace a = simulate({make_sim_job(g, l)}, build.plans, cfg);
  SimulationTrace b = simulate({make_sim_job(g, l)}, build.plans, cfg);
  CHECK(a.to_csv() == b.to_csv());
  CHECK(a.peak == b.peak);
  CHECK(a.iteration_times == b.iteration_times);
}

TEST_CASE("slowdown curve picks the largest threshold at or below the count") {
  SimConfig cfg;
  cfg.gpu_slowdown_curve = {{2, 2.0}, {3, 3.5}};
  CHECK(cfg.slowdown(1) == doctest::Approx(1.0));
  CHECK(cfg.slowdown(2) == doctest::Approx(2.0));
  CHECK(cfg.slowdown(3) == doctest::Approx(3.5));
  CHECK(cfg.slowdown(9) == doctest::Approx(3.5));
}

TEST_CASE("metrics arithmetic: VMP=100 EMP=65 VTC=10 ETC=12") {
  SimulationTrace vanilla, experimental;
  vanilla.peak = 100;
  vanilla.iteration_times["j"] = {10};
  experimental.peak = 65;
  experimental.iteration_times["j"] = {12};
  MetricsReport m = compute_metrics(vanilla, experimental);
  CHECK(m.msr == doctest::Approx(0.35));
  CHECK(m.eor == doctest::Approx(0.2));
  CHECK(m.cbr == doctest::Approx(1.75));

  experimental.peak = 100;
  experimental.iteration_times["j"] = {10};
  MetricsReport zero = compute_metrics(vanilla, experimental);
  CHECK(zero.msr == 0.0);
  CHECK(zero.eor == 0.0);
  CHECK(std::isinf(zero.cbr));

  SimulationTrace other;
  other.peak = 50;
  other.iteration_times["k"] = {10};
  CHECK_THROWS_AS(compute_metrics(vanilla, other), ValidationError);
}

TEST_CASE("trace CSV has the documented header") {
  SimulationTrace t;
  CHECK(t.to_csv() == "tick,job_id,event_kind,tensor_id,footprint_bytes\n");
}
