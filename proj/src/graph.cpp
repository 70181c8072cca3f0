#include "memsched/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>

#include <nlohmann/json.hpp>

namespace memsched {

const char* to_string(TensorKind k) {
  switch (k) {
    case TensorKind::Input: return "input";
    case TensorKind::Interim: return "interim";
    case TensorKind::Parameter: return "parameter";
    case TensorKind::UpdatedParameter: return "updated_parameter";
    case TensorKind::Output: return "output";
  }
  return "?";
}

const char* to_string(OpPhase p) {
  return p == OpPhase::ForwardBackward ? "forward_backward" : "optimize";
}

TensorKind tensor_kind_from_string(const std::string& s) {
  if (s == "input") return TensorKind::Input;
  if (s == "interim") return TensorKind::Interim;
  if (s == "parameter") return TensorKind::Parameter;
  if (s == "updated_parameter") return TensorKind::UpdatedParameter;
  if (s == "output") return TensorKind::Output;
  throw ValidationError("unknown tensor kind: " + s);
}

OpPhase op_phase_from_string(const std::string& s) {
  if (s == "forward_backward") return OpPhase::ForwardBackward;
  if (s == "optimize") return OpPhase::Optimize;
  throw ValidationError("unknown op phase: " + s);
}

ComputeGraph::ComputeGraph(JobId job_id, std::vector<TensorSpec> tensors,
                           std::vector<OperatorSpec> ops)
    : job_id_(std::move(job_id)),
      tensors_(std::move(tensors)),
      ops_(std::move(ops)) {
  validate();
}

void ComputeGraph::validate() {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& t = tensors_[i];
    if (t.size <= 0)
      throw ValidationError("nonpositive size for tensor " + t.id);
    if (!tensor_index_.emplace(t.id, i).second)
      throw ValidationError("duplicate tensor id " + t.id);
  }
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    const auto& op = ops_[i];
    if (!op_index_.emplace(op.id, i).second)
      throw ValidationError("duplicate op id " + op.id);
    for (const auto& tid : op.inputs) {
      if (!tensor_index_.count(tid))
        throw ValidationError("dangling tensor reference " + tid + " in op " +
                              op.id);
      consumers_[tid].push_back(op.id);
    }
    for (const auto& tid : op.outputs) {
      if (!tensor_index_.count(tid))
        throw ValidationError("dangling tensor reference " + tid + " in op " +
                              op.id);
      if (!producer_.emplace(tid, op.id).second)
        throw ValidationError("tensor " + tid + " has more than one producer");
    }
  }
  // Model inputs and parameters are sources: the framework materializes
  // them before the first iteration. Everything else needs a producer.
  for (const auto& t : tensors_) {
    if (t.kind == TensorKind::Input || t.kind == TensorKind::Parameter) {
      if (producer_.count(t.id))
        throw ValidationError("source tensor " + t.id +
                              " must not have a producing op");
      continue;
    }
    if (!producer_.count(t.id))
      throw ValidationError("tensor " + t.id + " has no producing op");
  }

  // Update ops define the updated-parameter aliasing.
  for (const auto& op : ops_) {
    if (op.phase == OpPhase::Optimize && op.kind == "update") {
      std::vector<TensorId> updated;
      for (const auto& tid : op.outputs)
        if (tensor(tid).kind == TensorKind::UpdatedParameter)
          updated.push_back(tid);
      if (updated.size() != 1)
        throw ValidationError("update op " + op.id +
                              " must output exactly one updated_parameter");
      std::vector<TensorId> params;
      for (const auto& tid : op.inputs)
        if (tensor(tid).kind == TensorKind::Parameter) params.push_back(tid);
      if (params.size() != 1)
        throw ValidationError("update op " + op.id +
                              " must read exactly one parameter");
      if (tensor(updated[0]).size != tensor(params[0]).size)
        throw ValidationError("updated parameter " + updated[0] +
                              " must match the size of " + params[0]);
      alias_[updated[0]] = params[0];
      updated_by_[params[0]] = updated[0];
    }
  }
  for (const auto& t : tensors_) {
    if (t.kind == TensorKind::UpdatedParameter && !alias_.count(t.id))
      throw ValidationError("updated parameter " + t.id +
                            " is not produced by an update op");
  }

  // Cycle check doubles as the topological-order precomputation.
  topological_order(*this);
}

const TensorSpec& ComputeGraph::tensor(const TensorId& id) const {
  auto it = tensor_index_.find(id);
  if (it == tensor_index_.end())
    throw ValidationError("unknown tensor " + id);
  return tensors_[it->second];
}

bool ComputeGraph::has_tensor(const TensorId& id) const {
  return tensor_index_.count(id) > 0;
}

const OperatorSpec& ComputeGraph::op(const OpId& id) const {
  auto it = op_index_.find(id);
  if (it == op_index_.end()) throw ValidationError("unknown op " + id);
  return ops_[it->second];
}

const OperatorSpec* ComputeGraph::producer(const TensorId& id) const {
  auto it = producer_.find(id);
  if (it == producer_.end()) return nullptr;
  return &op(it->second);
}

std::vector<const OperatorSpec*> ComputeGraph::consumers(
    const TensorId& id) const {
  std::vector<const OperatorSpec*> out;
  auto it = consumers_.find(id);
  if (it == consumers_.end()) return out;
  for (const auto& oid : it->second) out.push_back(&op(oid));
  return out;
}

std::optional<TensorId> ComputeGraph::alias_of(const TensorId& id) const {
  auto it = alias_.find(id);
  if (it == alias_.end()) return std::nullopt;
  return it->second;
}

const TensorId& ComputeGraph::storage_of(const TensorId& id) const {
  auto it = alias_.find(id);
  if (it == alias_.end()) return tensor(id).id;
  return it->second;
}

std::optional<TensorId> ComputeGraph::updated_version_of(
    const TensorId& param) const {
  auto it = updated_by_.find(param);
  if (it == updated_by_.end()) return std::nullopt;
  return it->second;
}

namespace {

using json = nlohmann::json;

void reject_unknown_fields(const json& obj, const std::set<std::string>& known,
                           const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!known.count(key))
      throw ValidationError("unknown field '" + key + "' in " + where);
  }
}

}  // namespace

ComputeGraph load_graph(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("graph file is not valid JSON: ") +
                          e.what());
  }
  if (!doc.is_object()) throw ValidationError("graph file must be an object");
  reject_unknown_fields(doc, {"job_id", "tensors", "ops"}, "graph file");

  JobId job_id = doc.at("job_id").get<std::string>();
  std::vector<TensorSpec> tensors;
  for (const auto& t : doc.at("tensors")) {
    reject_unknown_fields(t, {"id", "size", "kind"}, "tensor entry");
    TensorSpec spec;
    spec.id = t.at("id").get<std::string>();
    spec.size = t.at("size").get<Bytes>();
    spec.kind = tensor_kind_from_string(t.at("kind").get<std::string>());
    tensors.push_back(std::move(spec));
  }
  std::vector<OperatorSpec> ops;
  for (const auto& o : doc.at("ops")) {
    reject_unknown_fields(
        o, {"id", "kind", "inputs", "outputs", "attributes", "phase"},
        "op entry");
    OperatorSpec spec;
    spec.id = o.at("id").get<std::string>();
    spec.kind = o.at("kind").get<std::string>();
    spec.inputs = o.at("inputs").get<std::vector<std::string>>();
    spec.outputs = o.at("outputs").get<std::vector<std::string>>();
    spec.attributes = o.at("attributes").get<std::vector<double>>();
    spec.phase = op_phase_from_string(o.at("phase").get<std::string>());
    ops.push_back(std::move(spec));
  }
  return ComputeGraph(std::move(job_id), std::move(tensors), std::move(ops));
}

std::string save_graph(const ComputeGraph& graph) {
  nlohmann::ordered_json doc;
  doc["job_id"] = graph.job_id();
  doc["tensors"] = nlohmann::ordered_json::array();
  for (const auto& t : graph.tensors()) {
    doc["tensors"].push_back(
        {{"id", t.id}, {"size", t.size}, {"kind", to_string(t.kind)}});
  }
  doc["ops"] = nlohmann::ordered_json::array();
  for (const auto& o : graph.ops()) {
    doc["ops"].push_back({{"id", o.id},
                          {"kind", o.kind},
                          {"inputs", o.inputs},
                          {"outputs", o.outputs},
                          {"attributes", o.attributes},
                          {"phase", to_string(o.phase)}});
  }
  return doc.dump(2) + "\n";
}

std::vector<OpId> topological_order(const ComputeGraph& graph) {
  std::map<OpId, int> indegree;
  std::map<OpId, std::set<OpId>> succ;
  for (const auto& op : graph.ops()) indegree[op.id] = 0;
  for (const auto& op : graph.ops()) {
    for (const auto& tid : op.inputs) {
      const OperatorSpec* prod = graph.producer(tid);
      if (prod && prod->id != op.id) {
        if (succ[prod->id].insert(op.id).second) indegree[op.id]++;
      }
    }
    // An update op must run after every other use of its parameter: it
    // overwrites the aliased storage in place.
    for (const auto& tid : op.outputs) {
      if (graph.tensor(tid).kind != TensorKind::UpdatedParameter) continue;
      auto param = graph.alias_of(tid);
      if (!param) continue;
      for (const auto* user : graph.consumers(*param)) {
        if (user->id != op.id && succ[user->id].insert(op.id).second)
          indegree[op.id]++;
      }
    }
  }
  std::priority_queue<OpId, std::vector<OpId>, std::greater<OpId>> ready;
  for (const auto& [id, deg] : indegree)
    if (deg == 0) ready.push(id);
  std::vector<OpId> order;
  while (!ready.empty()) {
    OpId id = ready.top();
    ready.pop();
    order.push_back(id);
    for (const auto& next : succ[id])
      if (--indegree[next] == 0) ready.push(next);
  }
  if (order.size() != graph.ops().size())
    throw ValidationError("cycle detected in graph of job " + graph.job_id());
  return order;
}

}  // namespace memsched
