// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "vlprvos/nn.hpp"

namespace vlprvos {

struct AdamWSettings {
  double lr = 5e-5;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamWSettings&, const AdamWSettings&) = default;
};

/// Decoupled weight decay Adam. Frozen parameters are never written.
class AdamW {
 public:
  explicit AdamW(AdamWSettings settings = {}) : settings_(settings) {}

  /// One update; every trainable parameter needs a gradient entry.
  void step(ParameterStore& params, const GradMap& grads);

  std::uint64_t steps_taken() const { return step_; }
  const AdamWSettings& settings() const { return settings_; }
  void set_lr(double lr) { settings_.lr = lr; }

 private:
  struct Moments {
    Tensor m, v;
  };
  AdamWSettings settings_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace vlprvos
