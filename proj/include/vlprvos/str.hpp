// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "vlprvos/config.hpp"
#include "vlprvos/nn.hpp"

namespace vlprvos {

/// Space-time token grid and cube window. Token index is (t·H + y)·W + x.
struct CubeSpec {
  std::size_t frames = 1;  // T_c
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t window = 1;  // M_w
  std::size_t shift = 0;   // applied to both spatial axes, 0 or ⌊M_w/2⌋

  std::size_t tokens() const { return frames * height * width; }
  std::size_t cubes_per_row() const { return (width + window - 1) / window; }
  /// Throws ContractError on M_w = 0, M_w > min(H, W) or a shift other than 0 / ⌊M_w/2⌋.
  void validate() const;
  CubeSpec shifted() const;
};

/// Allowed (query, key) pairs over all tokens of a clip.
using AttentionPattern = BoolMatrix;

/// Cube id of every token: ⌊((y+s) mod H) / M_w⌋ · ⌈W/M_w⌉ + ⌊((x+s) mod W) / M_w⌋, shared across frames.
std::vector<std::size_t> cube_partition(const CubeSpec& spec);

/// Same frame OR same cube.
AttentionPattern build_cfmsa_mask(const CubeSpec& spec);
/// Same cube only.
AttentionPattern build_w3d_mask(const CubeSpec& spec);
/// Every pair.
AttentionPattern build_global_mask(std::size_t tokens);

std::uint64_t allowed_pair_count(const AttentionPattern& p);

/// Closed-form score + aggregation cost (projections and softmax omitted), unshifted single pass:
/// global 2(T_cHW)²C, w3d 2M_w²T_c²HWC, cfmsa 2T_cHW((T_c−1)M_w²+HW)C, none 0.
std::uint64_t flops_count(AttentionVariant variant, std::size_t tc, std::size_t h, std::size_t w, std::size_t c,
                          std::size_t mw);

/// Symbolic run of a sparse attention pass over the variant's unshifted pattern: walks every
/// allowed pair and tallies C multiply-accumulates for its score and C for its value aggregation.
std::uint64_t instrumented_flops(AttentionVariant variant, std::size_t tc, std::size_t h, std::size_t w,
                                 std::size_t c, std::size_t mw);

struct StrEncoderWeights {
  LayerNormWeights ln_a, ln_b, ln_f;
  AttentionParams attn_a, attn_b;  // attn_b is only bound for the two-pass variants
  FfnWeights ffn;
};

struct StrDecoderWeights {
  LayerNormWeights ln_q, ln_f;
  AttentionParams attn;
  FfnWeights ffn;
};

struct StrWeights {
  LinearWeights shallow_proj, lang_proj;
  std::vector<StrEncoderWeights> encoders;
  std::vector<StrDecoderWeights> decoders;
};

void register_str(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng);
StrWeights bind_str(Binder& b, const ModelConfig& cfg);

/// Patterns for one clip extent: first pass and (for cfmsa / w3d) the shifted second pass.
struct StrPatterns {
  AttentionVariant variant = AttentionVariant::kCfMsa;
  AttentionPattern first, second;
};
StrPatterns build_str_patterns(AttentionVariant variant, const CubeSpec& spec);

/// x: [T_c·H·W × C]. Pre-LN residual masked MSA (unshifted), then shifted (cfmsa / w3d), then FFN.
/// global runs one unmasked pass; none keeps only the FFN residual.
ad::Var str_encoder_forward(const ad::Var& x, const StrPatterns& patterns, const StrEncoderWeights& w);

/// x + MCA(LN(x), memory), then FFN residual. memory = [F_e projected ; shallow patches projected].
ad::Var str_decoder_forward(const ad::Var& x, const ad::Var& memory, const StrDecoderWeights& w);

/// Key set of the stage-3 decoder; just the projected language when shallow is empty.
ad::Var str_memory(const ad::Var& language, const std::vector<ad::Var>& shallow, const StrWeights& w);

/// N stacked (encoder, decoder) pairs.
ad::Var str_forward(const ad::Var& x, const ad::Var& memory, const StrPatterns& patterns, const StrWeights& w);

}  // namespace vlprvos
