#include "memsched/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memsched/access.hpp"
#include "memsched/peak.hpp"
#include "memsched/workload.hpp"

namespace memsched {

namespace {

using json = nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read file: " + path);
  std::ostringstream oss;
  oss << in.rdbuf();
  return oss.str();
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return path;
  return (std::filesystem::path(base_dir) / p).string();
}

}  // namespace

ScenarioConfig load_scenario(const std::string& document,
                             const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("scenario file is not valid JSON: ") +
                          e.what());
  }
  if (!doc.is_object())
    throw ValidationError("scenario file must be an object");

  static const std::set<std::string> known = {
      "pcie_bandwidth", "transfer_setup",  "memory_budget",
      "ewma_alpha",     "replan_threshold", "stall_epsilon",
      "stall_min_iters", "jobs",            "iterations",
      "seed",           "gpu_slowdown_curve", "predictor_file",
      "latency_file"};
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (!known.count(key))
      throw ValidationError("unknown field '" + key + "' in scenario file");
  }

  ScenarioConfig cfg;
  cfg.planner.pcie_bandwidth = doc.at("pcie_bandwidth").get<Bytes>();
  cfg.planner.transfer_setup = doc.at("transfer_setup").get<Tick>();
  cfg.planner.memory_budget = doc.at("memory_budget").get<Bytes>();
  if (doc.contains("ewma_alpha"))
    cfg.planner.ewma_alpha = doc["ewma_alpha"].get<double>();
  if (doc.contains("replan_threshold"))
    cfg.planner.replan_threshold = doc["replan_threshold"].get<double>();
  if (doc.contains("stall_epsilon"))
    cfg.planner.stall_epsilon = doc["stall_epsilon"].get<double>();
  if (doc.contains("stall_min_iters"))
    cfg.planner.stall_min_iters = doc["stall_min_iters"].get<int>();
  if (doc.contains("iterations"))
    cfg.iterations = doc["iterations"].get<int>();
  if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("gpu_slowdown_curve")) {
    for (const auto& [k, v] : doc["gpu_slowdown_curve"].items())
      cfg.gpu_slowdown_curve[std::stoi(k)] = v.get<double>();
  }
  if (doc.contains("predictor_file"))
    cfg.predictor_file = resolve(base_dir, doc["predictor_file"].get<std::string>());
  if (doc.contains("latency_file"))
    cfg.latency_file = resolve(base_dir, doc["latency_file"].get<std::string>());

  for (const auto& j : doc.at("jobs")) {
    for (const auto& [key, value] : j.items()) {
      (void)value;
      if (key != "graph_file" && key != "max_swap_ratio" &&
          key != "launch_tick")
        throw ValidationError("unknown field '" + key + "' in job entry");
    }
    ScenarioJobEntry entry;
    entry.graph_file = resolve(base_dir, j.at("graph_file").get<std::string>());
    if (j.contains("max_swap_ratio"))
      entry.max_swap_ratio = j["max_swap_ratio"].get<double>();
    if (j.contains("launch_tick"))
      entry.launch_tick = j["launch_tick"].get<Tick>();
    cfg.job_entries.push_back(std::move(entry));
  }
  if (cfg.job_entries.empty())
    throw ValidationError("scenario needs at least one job");

  for (const auto& entry : cfg.job_entries) {
    ComputeGraph g = load_graph(read_file(entry.graph_file));
    cfg.planner.max_swap_ratios[g.job_id()] = entry.max_swap_ratio;
    cfg.graphs.push_back(std::move(g));
  }
  cfg.planner.validate();
  return cfg;
}

namespace {

// Feeds the simulator's per-iteration latency reports back into the planner.
class ReplanController : public SimController {
 public:
  explicit ReplanController(Orchestrator& orch) : orch_(orch) {}

  std::optional<std::map<JobId, SchedulingPlan>> on_iteration_end(
      const JobId& job, int /*iteration*/,
      const std::map<OpId, Tick>& observed) override {
    return orch_.replan_if_needed({{job, observed}});
  }

 private:
  Orchestrator& orch_;
};

std::vector<SimJob> make_sim_jobs(const ScenarioConfig& cfg) {
  std::vector<SimJob> jobs;
  for (std::size_t i = 0; i < cfg.graphs.size(); ++i) {
    SimJob j;
    j.graph = cfg.graphs[i];
    j.true_latencies = true_latency_table(cfg.graphs[i], cfg.seed);
    j.launch_tick = cfg.job_entries[i].launch_tick;
    jobs.push_back(std::move(j));
  }
  return jobs;
}

SimConfig make_sim_config(const ScenarioConfig& cfg, SimMode mode) {
  SimConfig sim;
  sim.iterations = cfg.iterations;
  sim.seed = cfg.seed;
  sim.gpu_slowdown_curve = cfg.gpu_slowdown_curve;
  sim.mode = mode;
  sim.memory_budget = cfg.planner.memory_budget;
  sim.pcie_bandwidth = cfg.planner.pcie_bandwidth;
  sim.transfer_setup = cfg.planner.transfer_setup;
  return sim;
}

// Release-at-last-use plans: what the framework does with no scheduler.
std::map<JobId, SchedulingPlan> baseline_plans(const ScenarioConfig& cfg) {
  std::map<JobId, SchedulingPlan> plans;
  for (std::size_t i = 0; i < cfg.graphs.size(); ++i) {
    const ComputeGraph& g = cfg.graphs[i];
    AccessSequence seq = activity_analysis(
        generate_access_sequence(g, true_latency_table(g, cfg.seed)), g);
    SchedulingPlan plan;
    plan.job_id = g.job_id();
    for (const auto& a : seq.accesses)
      if (a.release_flag) plan.release_flags.insert(a.access_id);
    plans[g.job_id()] = std::move(plan);
  }
  return plans;
}

ModeStats stats_from(const std::string& mode, const SimulationTrace& trace,
                     int replans) {
  ModeStats s;
  s.mode = mode;
  s.peak = trace.peak;
  s.passive_swap_count = trace.passive_swap_count;
  s.blocked_ticks = trace.blocked_ticks;
  s.replan_count = replans;
  s.iteration_times = trace.iteration_times;
  for (const auto& [job, times] : trace.iteration_times) {
    if (times.empty()) continue;
    double sum = 0.0;
    for (Tick t : times) sum += static_cast<double>(t);
    s.total_mean_iteration_time += sum / static_cast<double>(times.size());
  }
  return s;
}

std::map<JobId, std::map<OpId, Tick>> load_latency_file(
    const std::string& path) {
  json doc = json::parse(read_file(path));
  std::map<JobId, std::map<OpId, Tick>> table;
  for (const auto& [job, ops] : doc.items())
    for (const auto& [op, t] : ops.items()) table[job][op] = t.get<Tick>();
  return table;
}

}  // namespace

namespace {

BuildResult build_scenario_plans(const ScenarioConfig& cfg, Orchestrator& orch) {
  if (!cfg.latency_file.empty())
    return orch.plan_with_latencies(load_latency_file(cfg.latency_file));
  if (!cfg.predictor_file.empty())
    return orch.plan_cold_start(
        LatencyPredictor::from_json(read_file(cfg.predictor_file)));
  throw ValidationError(
      "scheduled mode needs a latency source: fit a predictor "
      "(predictor_file) or supply a latency table (latency_file)");
}

}  // namespace

ScenarioResult plan_scenario(const ScenarioConfig& cfg) {
  ScenarioResult result;
  Orchestrator orch(cfg.planner, cfg.graphs);
  BuildResult build = build_scenario_plans(cfg, orch);
  result.plans = build.plans;
  result.peak_reports = build.reports;
  result.plan_diagnostic = build.diagnostic;
  return result;
}

ScenarioResult run_scenario(const ScenarioConfig& cfg,
                            const std::set<std::string>& modes) {
  for (const auto& m : modes)
    if (m != "vanilla" && m != "scheduled" && m != "passive")
      throw ValidationError("unknown mode: " + m);

  ScenarioResult result;
  const std::vector<SimJob> jobs = make_sim_jobs(cfg);
  const auto baselines = baseline_plans(cfg);

  if (modes.count("vanilla")) {
    SimulationTrace t =
        simulate(jobs, baselines, make_sim_config(cfg, SimMode::Vanilla));
    result.stats["vanilla"] = stats_from("vanilla", t, 0);
    result.traces["vanilla"] = std::move(t);
  }
  if (modes.count("passive")) {
    SimulationTrace t =
        simulate(jobs, baselines, make_sim_config(cfg, SimMode::Passive));
    result.stats["passive"] = stats_from("passive", t, 0);
    result.traces["passive"] = std::move(t);
  }
  if (modes.count("scheduled")) {
    Orchestrator orch(cfg.planner, cfg.graphs);
    BuildResult build = build_scenario_plans(cfg, orch);
    result.plans = build.plans;
    result.peak_reports = build.reports;
    result.plan_diagnostic = build.diagnostic;

    ReplanController controller(orch);
    SimulationTrace t = simulate(jobs, build.plans,
                                 make_sim_config(cfg, SimMode::Scheduled),
                                 &controller);
    result.replan_count = orch.replan_count();
    result.stats["scheduled"] =
        stats_from("scheduled", t, orch.replan_count());
    result.traces["scheduled"] = std::move(t);
  }
  return result;
}

std::string ModeStats::to_json() const {
  nlohmann::ordered_json doc;
  doc["mode"] = mode;
  doc["peak"] = peak;
  doc["total_mean_iteration_time"] = total_mean_iteration_time;
  doc["passive_swap_count"] = passive_swap_count;
  doc["blocked_ticks"] = blocked_ticks;
  doc["replan_count"] = replan_count;
  doc["iteration_times"] = nlohmann::ordered_json::object();
  for (const auto& [job, times] : iteration_times)
    doc["iteration_times"][job] = times;
  return doc.dump(2) + "\n";
}

ModeStats ModeStats::from_json(const std::string& document) {
  json doc = json::parse(document);
  ModeStats s;
  s.mode = doc.at("mode").get<std::string>();
  s.peak = doc.at("peak").get<Bytes>();
  s.total_mean_iteration_time =
      doc.at("total_mean_iteration_time").get<double>();
  s.passive_swap_count = doc.at("passive_swap_count").get<std::int64_t>();
  s.blocked_ticks = doc.at("blocked_ticks").get<Tick>();
  s.replan_count = doc.at("replan_count").get<int>();
  for (const auto& [job, times] : doc.at("iteration_times").items())
    s.iteration_times[job] = times.get<std::vector<Tick>>();
  return s;
}

std::string summary_table(const std::map<std::string, ModeStats>& stats,
                          const std::string& format) {
  auto vanilla = stats.find("vanilla");

  struct Row {
    std::string mode;
    Bytes peak;
    double time;
    double msr, eor, cbr;
    bool has_metrics;
    std::int64_t passive;
    int replans;
  };
  std::vector<Row> rows;
  for (const auto& name : {"vanilla", "scheduled", "passive"}) {
    auto it = stats.find(name);
    if (it == stats.end()) continue;
    const ModeStats& s = it->second;
    Row r{s.mode, s.peak, s.total_mean_iteration_time,
          0.0,    0.0,    0.0,
          false,  s.passive_swap_count, s.replan_count};
    if (vanilla != stats.end() && s.mode != "vanilla" &&
        vanilla->second.peak > 0 &&
        vanilla->second.total_mean_iteration_time > 0) {
      const double vmp = static_cast<double>(vanilla->second.peak);
      const double vtc = vanilla->second.total_mean_iteration_time;
      r.msr = (vmp - static_cast<double>(s.peak)) / vmp;
      r.eor = (s.total_mean_iteration_time - vtc) / vtc;
      r.cbr = cost_benefit_ratio(r.msr, r.eor);
      r.has_metrics = true;
    }
    rows.push_back(r);
  }

  if (format == "json") {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json row;
      row["mode"] = r.mode;
      row["peak"] = r.peak;
      row["total_mean_iteration_time"] = r.time;
      if (r.has_metrics) {
        row["msr"] = r.msr;
        row["eor"] = r.eor;
        row["cbr"] = std::isinf(r.cbr) ? json("inf") : json(r.cbr);
      }
      row["passive_swap_count"] = r.passive;
      row["replan_count"] = r.replans;
      doc.push_back(row);
    }
    return doc.dump(2) + "\n";
  }
  if (format != "csv") throw ValidationError("unknown format: " + format);

  std::ostringstream oss;
  oss << "mode,peak,total_mean_iteration_time,msr,eor,cbr,"
         "passive_swap_count,replan_count\n";
  oss << std::setprecision(12);
  for (const auto& r : rows) {
    oss << r.mode << ',' << r.peak << ',' << r.time << ',';
    if (r.has_metrics) {
      oss << r.msr << ',' << r.eor << ','
          << (std::isinf(r.cbr) ? std::string("inf") : [&] {
               std::ostringstream c;
               c << std::setprecision(12) << r.cbr;
               return c.str();
             }());
    } else {
      oss << ",,";
    }
    oss << ',' << r.passive << ',' << r.replans << '\n';
  }
  return oss.str();
}

}  // namespace memsched
