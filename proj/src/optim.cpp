#include "sparsepose/optim.hpp"

#include <cmath>
#include <string>

#include "sparsepose/errors.hpp"

namespace sparsepose {

void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState& state,
               const AdamConfig& cfg) {
  const std::size_t n = params.size();
  if (!grads.empty() && grads.size() != n)
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(n) + " parameters");
  if (state.m.size() != n) {
    state.m.assign(n, Real(0));
    state.v.assign(n, Real(0));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const Real b1 = static_cast<Real>(cfg.beta1);
  const Real b2 = static_cast<Real>(cfg.beta2);
  for (std::size_t i = 0; i < n; ++i) {
    const Real g = grads.empty() ? Real(0) : grads[i];
    state.m[i] = b1 * state.m[i] + (Real(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Real(1) - b2) * g * g;
    const double m_hat = static_cast<double>(state.m[i]) / bc1;
    const double v_hat = static_cast<double>(state.v[i]) / bc2;
    params[i] -= static_cast<Real>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

void sgd_step(std::span<Real> params, std::span<const Real> grads, double lr) {
  if (grads.empty()) return;
  if (grads.size() != params.size())
    throw ShapeError("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i] -= static_cast<Real>(lr) * grads[i];
}

}  // namespace sparsepose
