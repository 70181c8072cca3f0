#include "memsched/workload.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace memsched {

namespace {

std::string index_id(const char* prefix, int i) {
  std::ostringstream oss;
  oss << prefix;
  if (i < 10) oss << '0';
  oss << i;
  return oss.str();
}

struct LayerProfile {
  std::vector<Bytes> act_units;    // per-batch-element activation bytes
  std::vector<Bytes> param_units;  // parameter bytes (batch-independent)
  // Extra forward inputs: layer index -> earlier activation index.
  std::map<int, int> skips;
};

LayerProfile family_profile(const WorkloadSpec& spec) {
  LayerProfile p;
  auto ramp_down = [&](int layers, Bytes hi, Bytes lo) {
    for (int i = 0; i < layers; ++i) {
      const double t = layers > 1 ? double(i) / (layers - 1) : 0.0;
      p.act_units.push_back(
          std::max<Bytes>(1, Bytes(std::llround(hi + t * (lo - hi)))));
    }
  };
  auto ramp_up_params = [&](int layers, Bytes lo, Bytes hi) {
    for (int i = 0; i < layers; ++i) {
      const double t = layers > 1 ? double(i) / (layers - 1) : 0.0;
      p.param_units.push_back(
          std::max<Bytes>(1, Bytes(std::llround(lo + t * (hi - lo)))));
    }
  };

  if (spec.family == "vgg16") {
    // Wide early activations, parameter mass in the dense tail.
    ramp_down(13, 64, 4);
    p.act_units.insert(p.act_units.end(), {2, 2, 1});
    ramp_up_params(13, 2, 32);
    p.param_units.insert(p.param_units.end(), {512, 256, 128});
  } else if (spec.family == "resnet50") {
    ramp_down(50, 32, 2);
    ramp_up_params(50, 2, 48);
    for (int i = 4; i < 50; i += 3) p.skips[i] = i - 3;  // residual shortcuts
  } else if (spec.family == "inception_v3") {
    ramp_down(48, 48, 3);
    ramp_up_params(48, 2, 40);
    for (int i = 6; i < 48; i += 5) p.skips[i] = i - 4;  // branch merges
  } else if (spec.family == "inception_v4") {
    ramp_down(55, 48, 3);
    ramp_up_params(55, 2, 44);
    for (int i = 6; i < 55; i += 5) p.skips[i] = i - 4;
  } else if (spec.family == "densenet") {
    // Dense connectivity: activations grow with depth via concatenation.
    for (int i = 0; i < 58; ++i)
      p.act_units.push_back(8 + static_cast<Bytes>(i) / 2);
    ramp_up_params(58, 2, 24);
    for (int i = 3; i < 58; i += 2) p.skips[i] = i - 2;
  } else if (spec.family == "chain") {
    const int depth = spec.depth > 0 ? spec.depth : 8;
    for (int i = 0; i < depth; ++i) p.act_units.push_back(16);
    for (int i = 0; i < depth; ++i) p.param_units.push_back(8);
  } else if (spec.family == "random") {
    std::mt19937_64 rng(spec.seed);
    const int depth = spec.depth > 0
                          ? spec.depth
                          : static_cast<int>(6 + rng() % 9);
    std::uniform_int_distribution<Bytes> act(2, 64);
    std::uniform_int_distribution<Bytes> par(2, 32);
    for (int i = 0; i < depth; ++i) p.act_units.push_back(act(rng));
    for (int i = 0; i < depth; ++i) p.param_units.push_back(par(rng));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (int i = 3; i <= depth; ++i) {
      if (coin(rng) < 0.3) {
        std::uniform_int_distribution<int> src(1, i - 2);
        p.skips[i] = src(rng);
      }
    }
  } else {
    throw ValidationError("unknown workload family: " + spec.family);
  }
  return p;
}

}  // namespace

ComputeGraph generate_workload(const WorkloadSpec& spec) {
  if (spec.batch_size < 1)
    throw ValidationError("batch_size must be at least 1");
  const LayerProfile profile = family_profile(spec);
  const int L = static_cast<int>(profile.act_units.size());
  const Bytes batch = spec.batch_size;

  std::vector<TensorSpec> tensors;
  std::vector<OperatorSpec> ops;

  auto act = [&](int i) { return index_id("a", i); };
  auto grad = [&](int i) { return index_id("g", i); };
  auto weight = [&](int i) { return index_id("w", i); };
  auto wgrad = [&](int i) { return index_id("wg", i); };

  tensors.push_back({"x", profile.act_units.front() * batch, TensorKind::Input});
  for (int i = 1; i <= L; ++i) {
    const Bytes a_size = profile.act_units[i - 1] * batch;
    const Bytes w_size = profile.param_units[i - 1] * 16;
    if (i < L) tensors.push_back({act(i), a_size, TensorKind::Interim});
    tensors.push_back({weight(i), w_size, TensorKind::Parameter});
    tensors.push_back({weight(i) + "_new", w_size, TensorKind::UpdatedParameter});
    if (i > 1) tensors.push_back({grad(i - 1), a_size, TensorKind::Interim});
    tensors.push_back({wgrad(i), profile.param_units[i - 1] * batch,
                       TensorKind::Interim});
  }
  tensors.push_back({"y", profile.act_units.back() * batch, TensorKind::Output});

  for (int i = 1; i <= L; ++i) {
    OperatorSpec f;
    f.id = index_id("f", i);
    f.kind = "forward";
    f.inputs = {i == 1 ? TensorId("x") : act(i - 1), weight(i)};
    auto skip = profile.skips.find(i);
    if (skip != profile.skips.end()) f.inputs.push_back(act(skip->second));
    f.outputs = {i == L ? TensorId("y") : act(i)};
    f.attributes = {static_cast<double>(i),
                    static_cast<double>(profile.act_units[i - 1])};
    f.phase = OpPhase::ForwardBackward;
    ops.push_back(std::move(f));
  }
  for (int i = L; i >= 1; --i) {
    OperatorSpec b;
    b.id = index_id("b", i);
    b.kind = "backward";
    b.inputs = {i == L ? TensorId("y") : grad(i),
                i == 1 ? TensorId("x") : act(i - 1), weight(i)};
    if (i > 1) b.outputs.push_back(grad(i - 1));
    b.outputs.push_back(wgrad(i));
    b.attributes = {static_cast<double>(i),
                    static_cast<double>(profile.act_units[i - 1])};
    b.phase = OpPhase::ForwardBackward;
    ops.push_back(std::move(b));
  }
  for (int i = 1; i <= L; ++i) {
    OperatorSpec u;
    u.id = index_id("u", i);
    u.kind = "update";
    u.inputs = {weight(i), wgrad(i)};
    u.outputs = {weight(i) + "_new"};
    u.attributes = {static_cast<double>(i)};
    u.phase = OpPhase::Optimize;
    ops.push_back(std::move(u));
  }

  JobId job = spec.job_id.empty() ? spec.family : spec.job_id;
  return ComputeGraph(std::move(job), std::move(tensors), std::move(ops));
}

namespace {

// Splitmix-style per-kind coefficient derivation; stable across platforms.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t kind_key(std::uint64_t seed, const std::string& kind) {
  std::uint64_t h = seed;
  for (char c : kind) h = mix(h ^ static_cast<unsigned char>(c));
  return h;
}

double unit_fraction(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) /
         static_cast<double>(1ULL << 53);
}

}  // namespace

double LatencyOracle::value(const std::string& op_kind,
                            double total_input_bytes, double gpu_usage) const {
  const std::uint64_t k = kind_key(seed_, op_kind);
  const double base = 4.0 + 16.0 * unit_fraction(mix(k ^ 1));
  const double per_byte = 0.005 + 0.02 * unit_fraction(mix(k ^ 2));
  const double usage_coeff = 2.0 + 8.0 * unit_fraction(mix(k ^ 3));
  return base + per_byte * total_input_bytes + usage_coeff * gpu_usage;
}

std::map<OpId, Tick> true_latency_table(const ComputeGraph& graph,
                                        std::uint64_t seed, double gpu_usage) {
  LatencyOracle oracle(seed);
  std::map<OpId, Tick> table;
  for (const auto& op : graph.ops()) {
    double total = 0.0;
    for (const auto& tid : op.inputs)
      total += static_cast<double>(graph.tensor(tid).size);
    table[op.id] = std::max<Tick>(
        1, static_cast<Tick>(std::llround(oracle.value(op.kind, total, gpu_usage))));
  }
  return table;
}

std::vector<std::pair<FeatureVector, double>> generate_training_samples(
    const ComputeGraph& graph, std::uint64_t seed, int samples_per_op,
    double noise_fraction) {
  if (samples_per_op < 1)
    throw ValidationError("samples_per_op must be at least 1");
  LatencyOracle oracle(seed);
  const auto layouts = derive_layouts(graph);
  std::mt19937_64 rng(mix(seed ^ 0x5a5a5a5aULL));
  // Log-uniform size sweep over [1/16, 16]: the label spread has to dominate
  // measurement noise or the fit degenerates to the intercept.
  std::uniform_real_distribution<double> log_scale(std::log(1.0 / 64.0),
                                                   std::log(64.0));
  std::uniform_real_distribution<double> usage_dist(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::pair<FeatureVector, double>> samples;
  for (const auto& op : graph.ops()) {
    for (int s = 0; s < samples_per_op; ++s) {
      std::map<TensorId, std::vector<double>> dims;
      double total = 0.0;
      for (const auto& tid : op.inputs) {
        const double size = std::round(
            static_cast<double>(graph.tensor(tid).size) * std::exp(log_scale(rng)));
        dims[tid] = {size};
        total += size;
      }
      const double usage = usage_dist(rng);
      double label = oracle.value(op.kind, total, usage);
      if (noise_fraction > 0.0)
        label = std::max(0.0, label * (1.0 + noise_fraction * noise(rng)));
      samples.emplace_back(
          extract_features(op, dims, usage, layouts.at(op.kind)), label);
    }
  }
  return samples;
}

}  // namespace memsched
