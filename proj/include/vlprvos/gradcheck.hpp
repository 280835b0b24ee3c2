// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vlprvos/nn.hpp"

namespace vlprvos {

struct GradCheckOptions {
  double h = 1e-4;
  double tol = 1e-4;
  /// Entries probed per parameter; larger tensors are subsampled with a seeded draw. 0 = all.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
  /// Fourth-order central stencil (f(x±h), f(x±2h)) instead of the two-point one.
  bool five_point = false;
};

struct GradCheckEntry {
  std::string name;
  std::size_t numel = 0;
  std::size_t probed = 0;
  double ad_norm = 0.0;
  double fd_norm = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tol = 0.0;

  bool passed() const;
  double worst() const;
};

using LossFn = std::function<ad::Var(Binder&)>;

/// Central-difference check of reverse-mode gradients for every trainable parameter.
/// rel_error = |g_ad - g_fd| / max(|g_fd|, |g_ad|, 1e-12) over the probed entries.
GradCheckReport finite_diff_grad_check(const LossFn& loss_fn, ParameterStore& params, const GradCheckOptions& opts);

}  // namespace vlprvos
