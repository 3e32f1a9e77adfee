#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "sgst/batching.hpp"
#include "sgst/model.hpp"
#include "sgst/ops.hpp"
#include "sgst/synthetic.hpp"
#include "sgst/tensor.hpp"

namespace sgst::check {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double stddev = 1.0);
std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double stddev = 1.0);

// Small model for gradient and property checks.
ModelConfig tiny_config(std::size_t vocab_size, AlphaConfig alpha = {}, std::size_t layers = 1);

// Model whose every tensor, LayerNorm and bias included, holds generic random values.
ModelParams generic_params(const ModelConfig& config, std::uint64_t seed, double stddev = 0.5);

// Graph with distinct labels drawn from the synthetic task, encoded with `vocab`.
struct ToyData {
  std::vector<Example> examples;
  Vocabulary vocab;
  std::vector<EncodedExample> encoded;
};
ToyData toy_data(std::size_t count, std::uint64_t seed = 0, std::uint64_t first_index = 0);

struct GradCheckResult {
  double max_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Builds a scalar loss on the tape, reading inputs through the binding.
using LossBuilder = std::function<NodeId(ParamBinding&, AttentionStats*)>;

// Compares tape gradients of `build` with central differences for every coordinate of every
// tensor in `wrt`. Coordinates whose perturbation changes any attention support are skipped.
// The error of each tensor is max|a - n| / max(max|a|, max|n|, 1e-8); the result keeps the worst.
GradCheckResult grad_check(const LossBuilder& build, const std::vector<Tensor*>& wrt, double h = 1e-5);

// Loss = sum(out * weights) for fixed random weights, turning any tensor output into a scalar.
NodeId weighted_sum(ParamBinding& bind, NodeId out, const Tensor& weights);

// Every parameter tensor of a model.
std::vector<Tensor*> all_tensors(ModelParams& params);

}  // namespace sgst::check
