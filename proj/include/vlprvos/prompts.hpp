// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <vector>

#include "vlprvos/config.hpp"
#include "vlprvos/encoders.hpp"
#include "vlprvos/nn.hpp"

namespace vlprvos {

inline constexpr double kPromptInitStd = 0.02;
inline constexpr double kPoolEps = 1e-6;

/// Prompt tokens for one forward pass. Undefined members are switched off.
struct PromptValues {
  ad::Var vision;    // [L_v·m_v × C_v], group g = rows [g·m_v, (g+1)·m_v)
  ad::Var temporal;  // [m_tmp × C_v]
  ad::Var language;  // [m_e × C_e]
};

/// What the previous clip left behind for historical prompts.
struct ClipState {
  std::vector<ad::Var> features;  // per frame [N_v × C_e], final-layer patch features
  std::vector<ad::Var> masks;     // per frame [image × image], values in [0,1]

  bool empty() const { return features.empty(); }
  std::size_t frames() const { return features.size(); }
  /// Same values, cut from any computation graph.
  ClipState detached() const;
};

void register_prompts(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng);

/// Learnable prompt tensors as stored (before interaction).
PromptValues raw_prompts(Binder& b, const ModelConfig& cfg);

/// Joint transformer-encoder pass over all learnable prompts at width C_e, projected back per kind.
PromptValues interact_prompts(Binder& b, const ModelConfig& cfg, const PromptValues& raw);

/// Vision prompt group for layer l, or undefined when vision prompts are off.
ad::Var vision_prompt_group(const PromptValues& p, const ModelConfig& cfg, std::size_t layer);

/// [N_v × pixels] area-averaging map from a mask to the patch grid.
Tensor area_downsample_matrix(const ModelConfig& cfg);

/// One token per previous frame: projection_l(masked mean of its patch features). An empty
/// state yields clip_len copies of the learned null-history token.
ad::Var make_historical_prompts(Binder& b, const ModelConfig& cfg, const ClipState& state, std::size_t layer,
                                std::size_t clip_len);

/// Concatenates [CLS+patches, historical, vision group, temporal] for one frame.
VisualTokenGrid assemble_layer_input(const ad::Var& cls_and_patches, const ad::Var& historical,
                                     const ad::Var& vision_group, const ad::Var& temporal, std::size_t frame);

/// L_v·m_v·C_v + m_tmp·C_v + m_e·C_e + L_v·(C_e+1)·C_v + C_v, without the interaction layer.
std::size_t prompt_parameter_count(const ModelConfig& cfg);

}  // namespace vlprvos
