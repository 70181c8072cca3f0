#pragma once

#include <map>
#include <string>
#include <vector>

#include "memsched/graph.hpp"
#include "memsched/types.hpp"

namespace memsched {

/// Per-op-kind feature layout: how many input-dimension slots and attribute
/// slots a vector carries. Vectors are zero-padded to this layout.
struct FeatureLayout {
  std::size_t input_dim_slots = 0;
  std::size_t attribute_slots = 0;
};

struct FeatureVector {
  std::string op_kind;
  std::vector<double> values;  // input dims, attributes, gpu_usage
};

/// Assembles the feature vector for one operator: the flattened dimension
/// sizes of each input, the operator attributes, then the usage fraction.
FeatureVector extract_features(const OperatorSpec& op,
                               const std::map<TensorId, std::vector<double>>& input_dims,
                               double gpu_usage, const FeatureLayout& layout);

/// Derives a layout wide enough for every op of each kind in the graph,
/// using one dimension slot per input tensor (its size in bytes).
std::map<std::string, FeatureLayout> derive_layouts(const ComputeGraph& graph);

struct LatencyEstimate {
  OpId op_id;
  Tick value = 0;
  enum class Source { Predicted, Observed, Ewma } source = Source::Predicted;
};

/// Per-op-kind least-squares regression over the feature vector plus a
/// quadratic usage term. Stands in for a learned latency model; predictions
/// clamp at zero.
class LatencyPredictor {
 public:
  struct KindModel {
    std::vector<double> coefficients;  // one per feature value + usage^2 term
    double intercept = 0.0;
    double r2 = 0.0;
  };

  double predict(const FeatureVector& features) const;
  double r2(const std::string& op_kind) const;
  bool has_kind(const std::string& op_kind) const;

  std::string to_json() const;
  static LatencyPredictor from_json(const std::string& document);

  static LatencyPredictor fit(
      const std::vector<std::pair<FeatureVector, double>>& samples);

 private:
  std::map<std::string, KindModel> models_;
};

/// alpha * observation + (1 - alpha) * estimate.
Tick ewma_update(Tick estimate, Tick observation, double alpha);
double ewma_update(double estimate, double observation, double alpha);

struct ReplanState {
  Tick last_sum = 0;
  Tick current_sum = 0;
  double threshold = 0.2;
};

/// True iff |current - last| / last exceeds the threshold. A zero baseline
/// with nonzero current always replans.
bool should_replan(const ReplanState& state);

}  // namespace memsched
