#include "memsched/latency.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace memsched {

FeatureVector extract_features(
    const OperatorSpec& op,
    const std::map<TensorId, std::vector<double>>& input_dims,
    double gpu_usage, const FeatureLayout& layout) {
  if (gpu_usage < 0.0 || gpu_usage > 1.0)
    throw ValidationError("gpu_usage out of [0,1]: " +
                          std::to_string(gpu_usage));
  FeatureVector fv;
  fv.op_kind = op.kind;
  fv.values.assign(layout.input_dim_slots + layout.attribute_slots + 1, 0.0);
  std::size_t slot = 0;
  for (const auto& tid : op.inputs) {
    auto it = input_dims.find(tid);
    if (it == input_dims.end())
      throw ValidationError("no dimensions for input tensor " + tid);
    for (double d : it->second) {
      if (slot >= layout.input_dim_slots)
        throw ValidationError("feature layout too narrow for op " + op.id);
      fv.values[slot++] = d;
    }
  }
  for (std::size_t i = 0; i < op.attributes.size(); ++i) {
    if (i >= layout.attribute_slots)
      throw ValidationError("feature layout too narrow for op " + op.id);
    fv.values[layout.input_dim_slots + i] = op.attributes[i];
  }
  fv.values.back() = gpu_usage;
  return fv;
}

std::map<std::string, FeatureLayout> derive_layouts(const ComputeGraph& graph) {
  std::map<std::string, FeatureLayout> layouts;
  for (const auto& op : graph.ops()) {
    auto& layout = layouts[op.kind];
    layout.input_dim_slots = std::max(layout.input_dim_slots, op.inputs.size());
    layout.attribute_slots =
        std::max(layout.attribute_slots, op.attributes.size());
  }
  return layouts;
}

double LatencyPredictor::predict(const FeatureVector& features) const {
  auto it = models_.find(features.op_kind);
  if (it == models_.end())
    throw ValidationError("no fitted model for op kind " + features.op_kind);
  const KindModel& m = it->second;
  if (m.coefficients.size() != features.values.size() + 1)
    throw ValidationError("feature width mismatch for op kind " +
                          features.op_kind);
  double y = m.intercept;
  for (std::size_t i = 0; i < features.values.size(); ++i)
    y += m.coefficients[i] * features.values[i];
  const double usage = features.values.back();
  y += m.coefficients.back() * usage * usage;
  return std::max(0.0, y);
}

double LatencyPredictor::r2(const std::string& op_kind) const {
  auto it = models_.find(op_kind);
  if (it == models_.end())
    throw ValidationError("no fitted model for op kind " + op_kind);
  return it->second.r2;
}

bool LatencyPredictor::has_kind(const std::string& op_kind) const {
  return models_.count(op_kind) > 0;
}

LatencyPredictor LatencyPredictor::fit(
    const std::vector<std::pair<FeatureVector, double>>& samples) {
  std::map<std::string, std::vector<const std::pair<FeatureVector, double>*>>
      by_kind;
  for (const auto& s : samples) by_kind[s.first.op_kind].push_back(&s);

  LatencyPredictor predictor;
  for (const auto& [kind, rows] : by_kind) {
    if (rows.size() < 2)
      throw ValidationError("insufficient samples for op kind " + kind);
    const std::size_t width = rows.front()->first.values.size();
    for (const auto* row : rows)
      if (row->first.values.size() != width)
        throw ValidationError("inconsistent feature width for op kind " + kind);

    bool degenerate = true;
    for (const auto* row : rows)
      if (row->first.values != rows.front()->first.values) degenerate = false;
    if (degenerate)
      throw ValidationError("degenerate (all-identical) features for op kind " +
                            kind);

    // Design matrix: features, usage^2, intercept column.
    Eigen::MatrixXd X(rows.size(), width + 2);
    Eigen::VectorXd y(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& v = rows[r]->first.values;
      for (std::size_t c = 0; c < width; ++c) X(r, c) = v[c];
      X(r, width) = v.back() * v.back();
      X(r, width + 1) = 1.0;
      y(r) = rows[r]->second;
    }
    Eigen::VectorXd beta =
        X.completeOrthogonalDecomposition().solve(y);

    KindModel m;
    m.coefficients.assign(beta.data(), beta.data() + width + 1);
    m.intercept = beta(width + 1);

    const Eigen::VectorXd fitted = X * beta;
    const double mean = y.mean();
    const double ss_tot = (y.array() - mean).square().sum();
    const double ss_res = (y - fitted).squaredNorm();
    m.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    predictor.models_[kind] = std::move(m);
  }
  return predictor;
}

std::string LatencyPredictor::to_json() const {
  nlohmann::ordered_json doc;
  for (const auto& [kind, m] : models_) {
    doc[kind] = {{"coefficients", m.coefficients},
                 {"intercept", m.intercept},
                 {"r2", m.r2}};
  }
  return doc.dump(2) + "\n";
}

LatencyPredictor LatencyPredictor::from_json(const std::string& document) {
  nlohmann::json doc = nlohmann::json::parse(document);
  LatencyPredictor predictor;
  for (const auto& [kind, entry] : doc.items()) {
    KindModel m;
    m.coefficients = entry.at("coefficients").get<std::vector<double>>();
    m.intercept = entry.at("intercept").get<double>();
    m.r2 = entry.at("r2").get<double>();
    predictor.models_[kind] = std::move(m);
  }
  return predictor;
}

double ewma_update(double estimate, double observation, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ValidationError("ewma alpha out of [0,1]");
  if (estimate < 0 || observation < 0)
    throw ValidationError("ewma inputs must be nonnegative");
  return alpha * observation + (1.0 - alpha) * estimate;
}

Tick ewma_update(Tick estimate, Tick observation, double alpha) {
  return static_cast<Tick>(std::llround(ewma_update(
      static_cast<double>(estimate), static_cast<double>(observation), alpha)));
}

bool should_replan(const ReplanState& state) {
  if (state.threshold <= 0.0)
    throw ValidationError("replan threshold must be positive");
  if (state.last_sum < 0 || state.current_sum < 0)
    throw ValidationError("replan sums must be nonnegative");
  if (state.last_sum == 0) return state.current_sum > 0;
  const double ratio =
      std::abs(static_cast<double>(state.current_sum - state.last_sum)) /
      static_cast<double>(state.last_sum);
  return ratio > state.threshold;
}

}  // namespace memsched
