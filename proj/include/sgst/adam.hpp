#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sgst/tensor.hpp"

namespace sgst {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

// Bias-corrected Adam update of every parameter in place. Moments are allocated on the first call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamOptions& options = {});

// Linear warmup to `peak` over `warmup` steps, then inverse square-root decay. Steps count from 1.
struct LearningRateSchedule {
  double peak = 1e-3;
  std::uint64_t warmup = 200;

  double at(std::uint64_t step) const;
};

}  // namespace sgst
