#pragma once

#include <map>

#include "memsched/types.hpp"

namespace memsched {

struct PlannerConfig {
  Bytes pcie_bandwidth = 1;      // bytes per tick
  Tick transfer_setup = 0;       // fixed per-transfer cost
  Bytes memory_budget = 0;       // target GPU memory size
  std::map<JobId, double> max_swap_ratios;
  double ewma_alpha = 0.3;
  double replan_threshold = 0.2;
  double stall_epsilon = 0.0005;
  int stall_min_iters = 100;
  double cold_start_gpu_usage = 0.5;

  double max_swap_ratio(const JobId& job) const {
    auto it = max_swap_ratios.find(job);
    return it == max_swap_ratios.end() ? 1.0 : it->second;
  }

  void validate() const {
    if (pcie_bandwidth <= 0) throw ValidationError("pcie_bandwidth must be positive");
    if (transfer_setup < 0) throw ValidationError("transfer_setup must be nonnegative");
    if (memory_budget < 0) throw ValidationError("memory_budget must be nonnegative");
    if (ewma_alpha < 0 || ewma_alpha > 1) throw ValidationError("ewma_alpha out of [0,1]");
    if (replan_threshold <= 0) throw ValidationError("replan_threshold must be positive");
    if (stall_epsilon <= 0 || stall_epsilon >= 1) throw ValidationError("stall_epsilon out of (0,1)");
    for (const auto& [job, r] : max_swap_ratios)
      if (r <= 0 || r > 1)
        throw ValidationError("max swap ratio for " + job + " out of (0,1]");
  }
};

}  // namespace memsched
