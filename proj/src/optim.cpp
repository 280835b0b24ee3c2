// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/optim.hpp"

#include <cmath>

#include "vlprvos/errors.hpp"

namespace vlprvos {

void AdamW::step(ParameterStore& params, const GradMap& grads) {
  for (const auto& [name, p] : params.all()) {
    if (p.frozen) continue;
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("no gradient for trainable parameter " + name);
    if (it->second.shape() != p.value.shape()) throw ShapeError("gradient shape for " + name);
    if (!it->second.all_finite()) throw ContractError("non-finite gradient for " + name);
  }

  ++step_;
  const auto& s = settings_;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(step_));
  for (auto& [name, p] : params.all()) {
    if (p.frozen) continue;
    const Tensor& g = grads.at(name);
    auto& mom = moments_[name];
    if (mom.m.size() != p.value.size()) {
      mom.m = Tensor(p.value.shape());
      mom.v = Tensor(p.value.shape());
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double& w = p.value[i];
      w -= s.lr * s.weight_decay * w;
      mom.m[i] = s.beta1 * mom.m[i] + (1.0 - s.beta1) * g[i];
      mom.v[i] = s.beta2 * mom.v[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      w -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

}  // namespace vlprvos
