// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <vector>

#include "vlprvos/config.hpp"
#include "vlprvos/encoders.hpp"
#include "vlprvos/nn.hpp"

namespace vlprvos {

inline constexpr double kCosineEps = 1e-12;

struct FusionOutput {
  std::vector<ad::Var> fused;       // per frame [N_v × C], row i is grid cell (i / W, i % W)
  std::vector<ad::Var> similarity;  // per frame [N_v], empty when stage 2 is off
  ad::Var global;                   // x_e' [1 × C_e], x_e when stage 2 is off
};

void register_vlff(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng);

/// x_e + α ⊙ MCA(x_e, patches of all frames).
ad::Var v2l_propagate(const ad::Var& global, const std::vector<ad::Var>& patches, const AttentionParams& block,
                      const ad::Var& alpha);

/// Per frame: F + MCA(F, F_e).
std::vector<ad::Var> l2v_propagate(const std::vector<ad::Var>& patches, const ad::Var& language,
                                   const AttentionParams& block);

/// Row-wise cosine between each patch feature and x_e', ε-guarded: [N_v].
ad::Var cosine_similarity_map(const ad::Var& patches, const ad::Var& global);

/// Linear map of [F' | S] (width C_e + 1) to C. Throws ShapeError unless N_v is a perfect square.
ad::Var fuse_and_project(const ad::Var& patches, const ad::Var& similarity, const LinearWeights& proj);

/// Reshapes [N × C] with N = side² into [side × side × C], and back.
Tensor to_spatial(const Tensor& flat);
Tensor from_spatial(const Tensor& grid);

/// Stage 2 over encoder outputs (CLS first). With stage 2 off the patch features are only projected to C.
FusionOutput vlff_forward(Binder& b, const ModelConfig& cfg, const std::vector<ad::Var>& encoder_features,
                          const LinguisticFeature& lang);

}  // namespace vlprvos
