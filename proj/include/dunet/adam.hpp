#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dunet/error.hpp"
#include "dunet/tensor.hpp"

namespace dunet {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one pair per parameter tensor.
template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;
  std::int64_t t = 0;

  static AdamState zeros_like(std::span<const Tensor<Scalar>> params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.shape());
      s.v.emplace_back(p.shape());
    }
    return s;
  }
};

/// One bias-corrected Adam update of every parameter tensor in place.
template <typename Scalar>
void adam_step(std::span<Tensor<Scalar>> params, std::span<const Tensor<Scalar>> grads, AdamState<Scalar>& state,
               const AdamOptions& opt = {}) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size())
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  ++state.t;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  const auto b1 = static_cast<Scalar>(opt.beta1), b2 = static_cast<Scalar>(opt.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
      throw DimensionError("adam_step: buffer shape mismatch for parameter " + std::to_string(i));
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (Scalar(1) - b1) * g[j];
      v[j] = b2 * v[j] + (Scalar(1) - b2) * g[j] * g[j];
      const double m_hat = static_cast<double>(m[j]) / c1;
      const double v_hat = static_cast<double>(v[j]) / c2;
      p[j] -= static_cast<Scalar>(opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps));
    }
  }
}

}  // namespace dunet
