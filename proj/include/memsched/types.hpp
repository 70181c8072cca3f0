#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace memsched {

using Tick = std::int64_t;
using Bytes = std::int64_t;
using TensorId = std::string;
using OpId = std::string;
using JobId = std::string;
using AccessId = std::int64_t;

enum class TensorKind { Input, Interim, Parameter, UpdatedParameter, Output };
enum class OpPhase { ForwardBackward, Optimize };

const char* to_string(TensorKind k);
const char* to_string(OpPhase p);
TensorKind tensor_kind_from_string(const std::string& s);
OpPhase op_phase_from_string(const std::string& s);

struct TensorSpec {
  TensorId id;
  Bytes size = 0;
  TensorKind kind = TensorKind::Interim;
};

struct OperatorSpec {
  OpId id;
  std::string kind;
  std::vector<TensorId> inputs;
  std::vector<TensorId> outputs;
  std::vector<double> attributes;
  OpPhase phase = OpPhase::ForwardBackward;
};

// Error for anything wrong with an input document or a violated invariant.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace memsched
