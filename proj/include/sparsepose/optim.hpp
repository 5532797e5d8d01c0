#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sparsepose/real.hpp"

namespace sparsepose {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates and step count for one parameter block.
struct AdamState {
  std::vector<Real> m;
  std::vector<Real> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of `params` in place. An empty `grads`
/// span is treated as an all-zero gradient.
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState& state,
               const AdamConfig& cfg);

/// Plain gradient descent: params -= lr * grads.
void sgd_step(std::span<Real> params, std::span<const Real> grads, double lr);

}  // namespace sparsepose
