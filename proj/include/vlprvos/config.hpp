// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "vlprvos/optim.hpp"

namespace vlprvos {

enum class AttentionVariant { kCfMsa, kGlobal, kW3d, kNone };

std::string to_string(AttentionVariant v);
AttentionVariant parse_attention_variant(const std::string& s);

/// Which components are wired in. Defaults are the full model.
struct AblationFlags {
  bool lp_vp = true;     // language + vision prompts
  bool temporal = true;  // temporal prompts
  bool prtc = true;      // temporal capture between layers (needs temporal prompts)
  bool history = true;   // historical prompts
  bool stage1 = true;    // language injection inside the vision encoder
  bool stage2 = true;    // VL feature fusion
  bool stage3 = true;    // STR decoder over shallow + linguistic tokens
  AttentionVariant attention = AttentionVariant::kCfMsa;

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

/// Ablation presets 1-10, from prompts only up to the full model with each attention variant.
AblationFlags table_variant(int row);

/// Applies a comma-separated flag list: variant-N, no-temporal, no-lp-vp, no-tp, no-prtc, no-hp,
/// no-stage1, no-stage2, no-stage3, attn=<cfmsa|global|w3d|none>. Contradictions throw ConfigError.
AblationFlags apply_ablation(AblationFlags base, const std::string& flags);

/// Human-readable list of the active components, one token per component.
std::string describe_wiring(const AblationFlags& flags);

struct ModelConfig {
  // vision encoder
  std::size_t image_size = 32;
  std::size_t patch_size = 4;
  std::size_t channels = 3;
  std::size_t vision_layers = 4;
  std::size_t vision_dim = 64;
  std::size_t vision_heads = 4;
  std::size_t ffn_ratio = 4;
  // language encoder
  std::size_t language_layers = 2;
  std::size_t language_dim = 32;  // C_e, shared by the visual output projection
  std::size_t language_heads = 4;
  std::size_t vocab_size = 64;
  std::size_t max_words = 16;
  // prompts
  std::size_t vision_prompts = 10;
  std::size_t temporal_prompts = 4;
  std::size_t language_prompts = 10;
  // fusion + reasoning
  std::size_t fusion_dim = 16;  // C
  std::size_t fusion_heads = 2;
  std::size_t str_depth = 4;  // N
  std::size_t cube_size = 4;  // M_w
  double alpha_init = 0.01;
  // training
  std::size_t clip_len = 6;  // T_c
  double w_dice = 5.0;
  double w_focal = 2.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  AdamWSettings optimizer{};
  bool teacher_forcing = false;
  std::size_t seed = 0;

  AblationFlags ablation{};

  std::size_t grid_side() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid_side() * grid_side(); }
  std::size_t pixels() const { return image_size * image_size; }

  /// Throws ConfigError on inconsistent extents.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Toy defaults: image 32, patch 4, L_v 4, C_v 64, C_e 32, C 16.
ModelConfig toy_config();

/// Full-scale extents (ViT-B/16 at 352 px, C = 256); not trained here.
ModelConfig full_scale_config();

/// `[section]` headers and `key = value` lines; '#' starts a comment. Unknown keys are errors.
ModelConfig parse_config(const std::string& text);
std::string serialize_config(const ModelConfig& cfg);
ModelConfig load_config(const std::string& path);

}  // namespace vlprvos
