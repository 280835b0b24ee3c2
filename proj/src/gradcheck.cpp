// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vlprvos/errors.hpp"

namespace vlprvos {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [this](const auto& e) { return e.rel_error < tol; });
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.rel_error);
  return w;
}

GradCheckReport finite_diff_grad_check(const LossFn& loss_fn, ParameterStore& params, const GradCheckOptions& opts) {
  if (opts.h < 1e-6 || opts.h > 1e-3) throw ContractError("finite-difference step must lie in [1e-6, 1e-3]");

  auto evaluate = [&] {
    Binder b(params, false);
    return loss_fn(b).value().item();
  };

  Binder binder(params);
  auto loss = loss_fn(binder);
  if (loss.value().item() != evaluate()) throw DeterminismError("loss differs between two evaluations");
  ad::backward(loss);
  const GradMap grads = binder.grads();

  GradCheckReport report;
  report.tol = opts.tol;
  std::mt19937_64 rng(opts.seed);
  for (auto& [name, p] : params.all()) {
    if (p.frozen) continue;
    std::vector<std::size_t> idx(p.value.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (opts.max_entries && idx.size() > opts.max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_entries);
      std::sort(idx.begin(), idx.end());
    }
    double diff2 = 0.0, fd2 = 0.0, ad2 = 0.0;
    for (auto i : idx) {
      const double orig = p.value[i];
      auto at = [&](double offset) {
        p.value[i] = orig + offset;
        return evaluate();
      };
      double fd = 0.0;
      if (opts.five_point) {
        fd = (8.0 * (at(opts.h) - at(-opts.h)) - (at(2.0 * opts.h) - at(-2.0 * opts.h))) / (12.0 * opts.h);
      } else {
        fd = (at(opts.h) - at(-opts.h)) / (2.0 * opts.h);
      }
      p.value[i] = orig;
      const double g = grads.at(name)[i];
      diff2 += (g - fd) * (g - fd);
      fd2 += fd * fd;
      ad2 += g * g;
    }
    GradCheckEntry e;
    e.name = name;
    e.numel = p.value.size();
    e.probed = idx.size();
    e.ad_norm = std::sqrt(ad2);
    e.fd_norm = std::sqrt(fd2);
    e.rel_error = std::sqrt(diff2) / std::max({e.fd_norm, e.ad_norm, 1e-12});
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace vlprvos
