#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "memsched/graph.hpp"
#include "memsched/latency.hpp"
#include "memsched/types.hpp"

namespace memsched {

/// Families: vgg16, resnet50, inception_v3, inception_v4, densenet reproduce
/// layer counts and rough size profiles of the named networks; chain and
/// random are synthetic. All include forward, backward and update ops.
struct WorkloadSpec {
  std::string family = "chain";
  int batch_size = 32;
  std::uint64_t seed = 0;
  int depth = 0;  // chain/random only; 0 picks the family default
  JobId job_id;   // empty -> family name
};

ComputeGraph generate_workload(const WorkloadSpec& spec);

/// Ground-truth latency function used by the simulator and for training the
/// predictor: linear in the summed input bytes and in gpu usage, with
/// per-op-kind coefficients drawn deterministically from the seed.
class LatencyOracle {
 public:
  explicit LatencyOracle(std::uint64_t seed) : seed_(seed) {}

  double value(const std::string& op_kind, double total_input_bytes,
               double gpu_usage) const;

 private:
  std::uint64_t seed_;
};

/// Per-op base latencies at a fixed usage level, floored at one tick.
std::map<OpId, Tick> true_latency_table(const ComputeGraph& graph,
                                        std::uint64_t seed,
                                        double gpu_usage = 0.5);

/// Labeled regression samples covering every op kind in the graph: input
/// sizes jittered around the graph's real sizes, usage uniform in [0,1].
/// noise_fraction adds multiplicative gaussian noise to the labels.
std::vector<std::pair<FeatureVector, double>> generate_training_samples(
    const ComputeGraph& graph, std::uint64_t seed, int samples_per_op,
    double noise_fraction = 0.0);

}  // namespace memsched
