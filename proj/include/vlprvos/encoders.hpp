// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <vector>

#include "vlprvos/config.hpp"
#include "vlprvos/nn.hpp"

namespace vlprvos {

struct PromptValues;
struct ClipState;

/// Slot extents of one frame's token sequence: [CLS | patches | historical | vision | temporal].
struct SlotLayout {
  std::size_t patches = 0;
  std::size_t historical = 0;
  std::size_t vision_prompts = 0;
  std::size_t temporal_prompts = 0;

  std::size_t patch_offset() const { return 1; }
  std::size_t historical_offset() const { return 1 + patches; }
  std::size_t vision_prompt_offset() const { return historical_offset() + historical; }
  std::size_t temporal_offset() const { return vision_prompt_offset() + vision_prompts; }
  std::size_t total() const { return temporal_offset() + temporal_prompts; }

  friend bool operator==(const SlotLayout&, const SlotLayout&) = default;
};

struct VisualTokenGrid {
  ad::Var tokens;  // [layout.total() × C_v]
  SlotLayout layout;
  std::size_t frame = 0;
};

struct LinguisticFeature {
  ad::Var features;  // F_e [N_e × C_e]
  std::size_t eos_index = 0;
  ad::Var global;  // x_e [1 × C_e], the EOS row
};

/// Frozen weights of one pre-LN transformer layer.
struct TransformerLayerWeights {
  LayerNormWeights ln1, ln2;
  AttentionParams attn;
  FfnWeights ffn;
};

void register_transformer_layer(ParameterStore& store, const std::string& prefix, std::size_t dim,
                                std::size_t ffn_ratio, bool frozen, std::mt19937_64& rng);
TransformerLayerWeights bind_transformer_layer(Binder& b, const std::string& prefix, std::size_t heads);

void register_vision_encoder(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng);
void register_language_encoder(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng);

TransformerLayerWeights bind_vision_layer(Binder& b, const ModelConfig& cfg, std::size_t layer);

/// Flattens a frame [H × W × ch] into [N_v × patch²·ch], patches row-major, pixels (dy, dx, ch) inside.
Tensor patchify(const Tensor& frame, const ModelConfig& cfg);

/// Linear patch embedding plus positional embedding: [N_v × C_v].
ad::Var patch_embed(Binder& b, const ModelConfig& cfg, const Tensor& frame);

/// x + MSA(LN(x)) [+ MCA(LN(x), LN(cross))] followed by the FFN residual.
/// The cross-attention reuses attn as is; cross must already have the layer width.
ad::Var transformer_layer_forward(const ad::Var& x, const TransformerLayerWeights& w, const ad::Var* cross = nullptr);

/// One prompt-augmented vision layer. language, when given, is F_e mapped to width C_v.
VisualTokenGrid vision_layer_forward(const VisualTokenGrid& grid, const TransformerLayerWeights& w,
                                     const ad::Var* language);

/// F_e mapped to C_v for in-encoder injection (stage 1); undefined when stage 1 is off.
ad::Var language_for_injection(Binder& b, const ModelConfig& cfg, const LinguisticFeature& lang);

struct VisionEncoderOutput {
  std::vector<ad::Var> features;  // per frame [(N_v + 1) × C_e], CLS first
  std::vector<ad::Var> shallow;   // per frame [N_v × C_v], patch tokens after the first layer
  std::vector<SlotLayout> layouts;
};

struct VisionEncodeOptions {
  /// Forces the MCA term off even when stage 1 is wired (used for equivalence checks).
  bool disable_injection = false;
};

VisionEncoderOutput vision_encode_clip(Binder& b, const ModelConfig& cfg, const std::vector<Tensor>& frames,
                                       const PromptValues& prompts, const LinguisticFeature& lang,
                                       const ClipState& history, const VisionEncodeOptions& opts = {});

/// [SOS, words, EOS, language prompts] through the frozen text transformer.
LinguisticFeature language_encode(Binder& b, const ModelConfig& cfg, const std::vector<int>& words,
                                  const ad::Var* language_prompts);

}  // namespace vlprvos
