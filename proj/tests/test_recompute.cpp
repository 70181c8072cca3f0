#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

using namespace testsup;

TEST_CASE("msps: memory saving per regeneration tick") {
  CHECK(msps(100, 2) == doctest::Approx(50.0));
  CHECK(msps(0, 5) == doctest::Approx(0.0));
  CHECK_THROWS_AS(msps(100, 0), ValidationError);
  CHECK_THROWS_AS(msps(100, -3), ValidationError);
}

namespace {

// Two recompute candidates with different MSPS and a big mid-chain tensor
// that dominates the peak.
std::vector<JobContext> two_candidate_job() {
  std::vector<TensorSpec> tensors = {
      ten("x", 4, TensorKind::Input),    ten("t2", 8, TensorKind::Interim),
      ten("t4", 20, TensorKind::Interim), ten("big", 64, TensorKind::Interim),
      ten("m", 4, TensorKind::Interim),  ten("y", 1, TensorKind::Interim),
  };
  std::vector<OperatorSpec> ops = {
      oper("A", {"x"}, {"t2"}),            // [0,5)   msps 8/5  = 1.6
      oper("A2", {"x"}, {"t4"}),           // [5,7)   msps 20/2 = 10
      oper("B", {"x"}, {"big"}),           // [7,15)
      oper("B2", {"big"}, {"m"}),          // [15,25)
      oper("C", {"t2", "t4", "m"}, {"y"}), // [25,30)
  };
  ComputeGraph graph("rc", std::move(tensors), std::move(ops));
  std::map<OpId, Tick> lat = {
      {"A", 5}, {"A2", 2}, {"B", 8}, {"B2", 10}, {"C", 5}};
  std::vector<JobContext> jobs;
  jobs.push_back(make_job_context(graph, lat));
  return jobs;
}

}  // namespace

TEST_CASE("recompute pass: highest MSPS first, peak drop, time shift") {
  std::vector<JobContext> jobs = two_candidate_job();
  PlannerConfig config;
  config.pcie_bandwidth = 4;

  CHECK(jobs[0].report.memory_peak == 100);  // x+t2+t4+big+m at t=15
  CHECK(jobs[0].report.peak_time == 15);
  const Tick period0 = jobs[0].seq.iteration_period;
  CHECK(period0 == 30);

  // First pass picks t4 (msps 10 beats t2's 1.6).
  CHECK(recompute_pass(jobs, 0, config));
  REQUIRE(jobs[0].plan.recompute_events.size() == 1);
  {
    const RecomputeEvent& ev = jobs[0].plan.recompute_events[0];
    CHECK(ev.tensor_id == "t4");
    CHECK(ev.regen_op == "A2");
    CHECK(ev.recompute_latency == 2);
    CHECK(ev.memory_saving == 20);
    const TensorAccess& target = jobs[0].seq.access(ev.target_access);
    CHECK(target.tensor_id == "t4");
    CHECK(target.type == AccessType::TUA);
  }
  CHECK(jobs[0].report.memory_peak == 80);
  CHECK(jobs[0].seq.iteration_period == period0 + 2);

  // Second pass picks t2; t4 is already recomputed.
  CHECK(recompute_pass(jobs, 0, config));
  REQUIRE(jobs[0].plan.recompute_events.size() == 2);
  CHECK(jobs[0].plan.recompute_events[1].tensor_id == "t2");
  CHECK(jobs[0].report.memory_peak == 72);
  CHECK(jobs[0].seq.iteration_period == period0 + 2 + 5);

  // Analyzer and oracle agree on the final plan.
  OracleResult o = replay_oracle(jobs[0].seq, jobs[0].plan, jobs[0].catalog);
  CHECK(o.peak == jobs[0].report.memory_peak);
  CHECK(o.peak_time == jobs[0].report.peak_time);
}

TEST_CASE("recompute pass is a no-op when the merged peak fits the budget") {
  std::vector<JobContext> jobs = two_candidate_job();
  PlannerConfig config;
  CHECK(!recompute_pass(jobs, 1'000'000, config));
  CHECK(jobs[0].plan.recompute_events.empty());
}

TEST_CASE("candidates whose producer inputs were released are ineligible") {
  // m's producer reads big, and big is released after its last use; big
  // itself has no use after the peak. Nothing is eligible.
  std::vector<TensorSpec> tensors = {
      ten("x", 4, TensorKind::Input),
      ten("big", 64, TensorKind::Interim),
      ten("m", 4, TensorKind::Interim),
      ten("y", 1, TensorKind::Interim),
  };
  std::vector<OperatorSpec> ops = {
      oper("A", {"x"}, {"big"}),
      oper("B", {"big"}, {"m"}),
      oper("C", {"m"}, {"y"}),
  };
  ComputeGraph graph("blocked", std::move(tensors), std::move(ops));
  std::vector<JobContext> jobs;
  jobs.push_back(make_job_context(graph, {{"A", 10}, {"B", 10}, {"C", 5}}));
  PlannerConfig config;
  CHECK(!recompute_pass(jobs, 0, config));
  CHECK(jobs[0].plan.recompute_events.empty());
}

TEST_CASE("candidates of swapped tensors are ineligible") {
  PlannerConfig config;
  config.pcie_bandwidth = 4;
  config.transfer_setup = 1;
  for (std::uint64_t seed = 300; seed < 310; ++seed) {
    JobContext job = planned_random_job(seed, 3, config);
    std::set<TensorId> swapped;
    for (const auto& e : job.plan.swap_events)
      swapped.insert(job.catalog.storage(e.tensor_id));
    std::vector<JobContext> jobs = {job};
    while (recompute_pass(jobs, 0, config)) {
    }
    for (const auto& ev : jobs[0].plan.recompute_events) {
      CAPTURE(seed);
      CHECK(swapped.count(jobs[0].catalog.storage(ev.tensor_id)) == 0);
    }
  }
}

TEST_CASE("recomputation never raises the peak, even after swap revalidation") {
  PlannerConfig config;
  config.pcie_bandwidth = 4;
  config.transfer_setup = 1;
  for (std::uint64_t seed = 400; seed < 430; ++seed) {
    std::vector<JobContext> jobs = {planned_random_job(seed, 3, config)};
    Bytes last_peak = jobs[0].report.memory_peak;
    while (recompute_pass(jobs, 0, config)) {
      CAPTURE(seed);
      CHECK(jobs[0].report.memory_peak <= last_peak);
      last_peak = jobs[0].report.memory_peak;
      // Regeneration inputs of every event stayed resident: never released
      // by the final plan, never swapped.
      for (const auto& ev : jobs[0].plan.recompute_events) {
        const OperatorSpec* regen = jobs[0].graph.producer(ev.tensor_id);
        REQUIRE(regen != nullptr);
        for (const auto& in : regen->inputs) {
          const TensorId storage = jobs[0].catalog.storage(in);
          for (const auto& e : jobs[0].plan.swap_events)
            CHECK(jobs[0].catalog.storage(e.tensor_id) != storage);
        }
      }
    }
  }
}
