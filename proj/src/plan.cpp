#include "memsched/plan.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace memsched {

const SwapEvent* SchedulingPlan::find_event(std::int64_t event_id) const {
  for (const auto& e : swap_events)
    if (e.event_id == event_id) return &e;
  return nullptr;
}

std::int64_t SchedulingPlan::next_event_id() const {
  std::int64_t id = 0;
  for (const auto& e : swap_events) id = std::max(id, e.event_id + 1);
  for (const auto& e : recompute_events) id = std::max(id, e.event_id + 1);
  return id;
}

Tick transfer_duration(Bytes size, Bytes pcie_bandwidth, Tick transfer_setup) {
  if (pcie_bandwidth <= 0)
    throw ValidationError("pcie_bandwidth must be positive");
  if (transfer_setup < 0)
    throw ValidationError("transfer_setup must be nonnegative");
  return (size + pcie_bandwidth - 1) / pcie_bandwidth + transfer_setup;
}

std::string save_plans(const std::map<JobId, SchedulingPlan>& plans) {
  nlohmann::ordered_json doc;
  for (const auto& [job, plan] : plans) {
    nlohmann::ordered_json entry;
    entry["version"] = plan.version;
    entry["swap_events"] = nlohmann::ordered_json::array();
    for (const auto& e : plan.swap_events) {
      entry["swap_events"].push_back(
          {{"event_id", e.event_id},
           {"tensor", e.tensor_id},
           {"direction", e.direction == SwapDirection::Out ? "out" : "in"},
           {"trigger_access", e.trigger_access},
           {"delta_time", e.delta_time},
           {"wraps_iteration", e.wraps_iteration},
           {"start_time", e.start_time},
           {"end_time", e.end_time},
           {"pair_id", e.pair_id},
           {"serves_access", e.serves_access}});
    }
    entry["recompute_events"] = nlohmann::ordered_json::array();
    for (const auto& e : plan.recompute_events) {
      entry["recompute_events"].push_back(
          {{"event_id", e.event_id},
           {"tensor", e.tensor_id},
           {"target_access", e.target_access},
           {"regen_op", e.regen_op},
           {"recompute_latency", e.recompute_latency},
           {"memory_saving", e.memory_saving}});
    }
    entry["release_flags"] =
        std::vector<AccessId>(plan.release_flags.begin(),
                              plan.release_flags.end());
    doc[job] = std::move(entry);
  }
  return doc.dump(2) + "\n";
}

std::map<JobId, SchedulingPlan> load_plans(const std::string& document) {
  nlohmann::json doc = nlohmann::json::parse(document);
  std::map<JobId, SchedulingPlan> plans;
  for (const auto& [job, entry] : doc.items()) {
    SchedulingPlan plan;
    plan.job_id = job;
    plan.version = entry.at("version").get<std::int64_t>();
    for (const auto& e : entry.at("swap_events")) {
      SwapEvent ev;
      ev.event_id = e.at("event_id").get<std::int64_t>();
      ev.job_id = job;
      ev.tensor_id = e.at("tensor").get<std::string>();
      ev.direction = e.at("direction").get<std::string>() == "out"
                         ? SwapDirection::Out
                         : SwapDirection::In;
      ev.trigger_access = e.at("trigger_access").get<AccessId>();
      ev.delta_time = e.at("delta_time").get<Tick>();
      ev.wraps_iteration = e.at("wraps_iteration").get<bool>();
      ev.start_time = e.at("start_time").get<Tick>();
      ev.end_time = e.at("end_time").get<Tick>();
      ev.pair_id = e.at("pair_id").get<std::int64_t>();
      ev.serves_access = e.at("serves_access").get<AccessId>();
      plan.swap_events.push_back(std::move(ev));
    }
    for (const auto& e : entry.at("recompute_events")) {
      RecomputeEvent ev;
      ev.event_id = e.at("event_id").get<std::int64_t>();
      ev.job_id = job;
      ev.tensor_id = e.at("tensor").get<std::string>();
      ev.target_access = e.at("target_access").get<AccessId>();
      ev.regen_op = e.at("regen_op").get<std::string>();
      ev.recompute_latency = e.at("recompute_latency").get<Tick>();
      ev.memory_saving = e.at("memory_saving").get<Bytes>();
      plan.recompute_events.push_back(std::move(ev));
    }
    for (const auto& id : entry.at("release_flags"))
      plan.release_flags.insert(id.get<AccessId>());
    plans[job] = std::move(plan);
  }
  return plans;
}

}  // namespace memsched
