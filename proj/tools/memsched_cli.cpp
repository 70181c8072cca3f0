#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "memsched/plan.hpp"
#include "memsched/scenario.hpp"
#include "memsched/workload.hpp"

namespace fs = std::filesystem;
using namespace memsched;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read file: " + path);
  std::ostringstream oss;
  oss << in.rdbuf();
  return oss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out << content;
}

std::set<std::string> expand_modes(const std::string& mode) {
  if (mode == "all") return {"vanilla", "scheduled", "passive"};
  return {mode};
}

void write_scenario_outputs(const ScenarioResult& result, const fs::path& out,
                            const std::string& format) {
  for (const auto& [mode, trace] : result.traces)
    write_file(out / ("trace_" + mode + ".csv"), trace.to_csv());
  for (const auto& [mode, stats] : result.stats)
    write_file(out / ("stats_" + mode + ".json"), stats.to_json());
  if (!result.plans.empty())
    write_file(out / "plans.json", save_plans(result.plans));
  if (!result.peak_reports.empty()) {
    std::ostringstream oss;
    oss << "{\n";
    bool first = true;
    for (const auto& [job, report] : result.peak_reports) {
      if (!first) oss << ",\n";
      first = false;
      oss << "\"" << job << "\": " << report.to_json();
    }
    oss << "}\n";
    write_file(out / "peaks.json", oss.str());
  }
  const std::string ext = format == "json" ? "json" : "csv";
  write_file(out / ("summary." + ext), summary_table(result.stats, format));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-granularity GPU memory scheduling toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string mode = "all";
  std::string format = "csv";
  std::optional<std::uint64_t> seed_flag;

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a workload graph file");
  WorkloadSpec wl;
  gen->add_option("--family", wl.family,
                  "vgg16|resnet50|inception_v3|inception_v4|densenet|chain|random");
  gen->add_option("--batch", wl.batch_size, "Batch size (>= 1)");
  gen->add_option("--depth", wl.depth, "Layer count for chain/random");
  gen->add_option("--job-id", wl.job_id, "Job id (defaults to the family)");
  gen->add_option("--seed", seed_flag, "RNG seed");
  gen->add_option("--out", out_path, "Output graph file")->required();

  // fit
  auto* fit = app.add_subcommand(
      "fit", "Fit the latency predictor on samples from a workload");
  int samples_per_op = 40;
  double noise = 0.0;
  fit->add_option("--config", config_path, "Workload graph file")->required();
  fit->add_option("--samples", samples_per_op, "Samples per op");
  fit->add_option("--noise", noise, "Multiplicative label noise fraction");
  fit->add_option("--seed", seed_flag, "RNG seed");
  fit->add_option("--out", out_path, "Output predictor file")->required();

  // plan
  auto* plan = app.add_subcommand(
      "plan", "Build scheduling plans for a scenario without simulating");
  plan->add_option("--config", config_path, "Scenario config file")->required();
  plan->add_option("--seed", seed_flag, "Seed override");
  plan->add_option("--out", out_path, "Output directory")->required();

  // simulate
  auto* sim = app.add_subcommand(
      "simulate", "Run scenario modes and write traces, stats and a summary");
  sim->add_option("--config", config_path, "Scenario config file")->required();
  sim->add_option("--mode", mode, "vanilla|scheduled|passive|all");
  sim->add_option("--seed", seed_flag, "Seed override");
  sim->add_option("--format", format, "summary format: csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
  sim->add_option("--out", out_path, "Output directory")->required();

  // report
  auto* report = app.add_subcommand(
      "report", "Summarize stats files from a simulate output directory");
  report->add_option("--config", config_path,
                     "Directory containing stats_<mode>.json files")
      ->required();
  report->add_option("--format", format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
  report->add_option("--out", out_path, "Output file (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      if (seed_flag) wl.seed = *seed_flag;
      write_file(out_path, save_graph(generate_workload(wl)));
    } else if (*fit) {
      ComputeGraph graph = load_graph(read_file(config_path));
      const std::uint64_t seed = seed_flag.value_or(0);
      auto samples =
          generate_training_samples(graph, seed, samples_per_op, noise);
      write_file(out_path, LatencyPredictor::fit(samples).to_json());
    } else if (*plan) {
      ScenarioConfig cfg = load_scenario(
          read_file(config_path), fs::path(config_path).parent_path().string());
      if (seed_flag) cfg.seed = *seed_flag;
      ScenarioResult result = plan_scenario(cfg);
      write_file(fs::path(out_path) / "plans.json", save_plans(result.plans));
      std::ostringstream oss;
      oss << "{\n";
      bool first = true;
      for (const auto& [job, rep] : result.peak_reports) {
        if (!first) oss << ",\n";
        first = false;
        oss << "\"" << job << "\": " << rep.to_json();
      }
      oss << "}\n";
      write_file(fs::path(out_path) / "peaks.json", oss.str());
      if (!result.plan_diagnostic.empty())
        std::cout << result.plan_diagnostic << "\n";
    } else if (*sim) {
      ScenarioConfig cfg = load_scenario(
          read_file(config_path), fs::path(config_path).parent_path().string());
      if (seed_flag) cfg.seed = *seed_flag;
      ScenarioResult result = run_scenario(cfg, expand_modes(mode));
      write_scenario_outputs(result, out_path, format);
    } else if (*report) {
      std::map<std::string, ModeStats> stats;
      for (const auto& name : {"vanilla", "scheduled", "passive"}) {
        const fs::path p =
            fs::path(config_path) / ("stats_" + std::string(name) + ".json");
        if (fs::exists(p)) stats[name] = ModeStats::from_json(read_file(p.string()));
      }
      if (stats.empty())
        throw ValidationError("no stats_<mode>.json files in " + config_path);
      const std::string table = summary_table(stats, format);
      if (out_path.empty())
        std::cout << table;
      else
        write_file(out_path, table);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
