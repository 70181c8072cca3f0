#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memsched/types.hpp"

namespace memsched {

/// One job's compute DAG. Operators produce and consume sized tensors; the
/// graph carries no actual tensor data, only sizes, kinds and op attributes.
class ComputeGraph {
 public:
  ComputeGraph() = default;
  ComputeGraph(JobId job_id, std::vector<TensorSpec> tensors,
               std::vector<OperatorSpec> ops);

  const JobId& job_id() const { return job_id_; }
  const std::vector<TensorSpec>& tensors() const { return tensors_; }
  const std::vector<OperatorSpec>& ops() const { return ops_; }

  const TensorSpec& tensor(const TensorId& id) const;
  const OperatorSpec& op(const OpId& id) const;
  bool has_tensor(const TensorId& id) const;

  /// Producing op of a tensor, if any (inputs made by placeholders have one
  /// too; a tensor with no producer is rejected at validation time unless it
  /// is produced by a placeholder op).
  const OperatorSpec* producer(const TensorId& id) const;
  std::vector<const OperatorSpec*> consumers(const TensorId& id) const;

  /// For an updated parameter, the parameter tensor whose storage it aliases.
  /// Inferred from the update op: its unique parameter-kind input.
  std::optional<TensorId> alias_of(const TensorId& id) const;
  /// Follows updated_parameter aliasing to the underlying storage tensor.
  const TensorId& storage_of(const TensorId& id) const;
  /// Inverse of alias_of: the updated parameter that overwrites `param`.
  std::optional<TensorId> updated_version_of(const TensorId& param) const;

 private:
  void validate();

  JobId job_id_;
  std::vector<TensorSpec> tensors_;
  std::vector<OperatorSpec> ops_;
  std::map<TensorId, std::size_t> tensor_index_;
  std::map<OpId, std::size_t> op_index_;
  std::map<TensorId, OpId> producer_;
  std::map<TensorId, std::vector<OpId>> consumers_;
  std::map<TensorId, TensorId> alias_;          // updated param -> param
  std::map<TensorId, TensorId> updated_by_;     // param -> updated param
};

/// Parses the JSON graph document. Unknown fields are rejected; every
/// structural error names the offending id.
ComputeGraph load_graph(const std::string& document);
std::string save_graph(const ComputeGraph& graph);

/// Deterministic topological order; ties broken by ascending op id.
std::vector<OpId> topological_order(const ComputeGraph& graph);

}  // namespace memsched
