// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/prtc.hpp"

#include "vlprvos/errors.hpp"

namespace vlprvos {

TemporalCarriers prtc_forward(const TemporalCarriers& carriers, const std::vector<ad::Var>& frame_patches,
                              const TransformerLayerWeights& layer) {
  if (carriers.empty() || frame_patches.empty()) throw ContractError("PRTC needs a non-empty clip");
  const std::size_t width = layer.attn.model_dim();
  const std::size_t m = carriers.front().value().rows();
  for (const auto& c : carriers) {
    if (c.value().cols() != width) throw ShapeError("carrier width " + std::to_string(c.value().cols()));
    if (c.value().rows() != m) throw ShapeError("carrier count differs across frames");
  }
  for (const auto& p : frame_patches) {
    if (p.value().cols() != width) throw ShapeError("patch width " + std::to_string(p.value().cols()));
  }
  if (m == 0) return carriers;

  // Encoder: the frozen layer over all carriers as one sequence, no language term.
  auto encoded = transformer_layer_forward(ad::concat_rows(carriers), layer);

  // Decoder: same weights, self-attention replaced by attention onto every frame's patches.
  auto memory = layer_norm(ad::concat_rows(frame_patches), layer.ln1);
  auto mixed = ad::add(encoded, multi_head_attention(layer_norm(encoded, layer.ln1), memory, layer.attn));
  auto decoded = ad::add(mixed, ffn_apply(layer_norm(mixed, layer.ln2), layer.ffn));

  TemporalCarriers out;
  out.reserve(carriers.size());
  for (std::size_t t = 0; t < carriers.size(); ++t) out.push_back(ad::slice_rows(decoded, t * m, m));
  return out;
}

PrtcFlopBreakdown prtc_flops(const ModelConfig& cfg) {
  using u64 = std::uint64_t;
  const u64 n = static_cast<u64>(cfg.clip_len) * cfg.temporal_prompts;
  const u64 kv = static_cast<u64>(cfg.clip_len) * cfg.num_patches();
  const u64 d = cfg.vision_dim, f = cfg.vision_dim * cfg.ffn_ratio;
  PrtcFlopBreakdown out;
  if (n == 0) return out;
  out.attention = 2 * n * n * d + 2 * n * kv * d;
  const u64 encoder_proj = 4 * n * d * d + 2 * n * d * f;
  const u64 decoder_proj = 2 * n * d * d + 2 * kv * d * d + 2 * n * d * f;
  out.projection = encoder_proj + decoder_proj;
  return out;
}

std::uint64_t vision_layer_flops(const ModelConfig& cfg) {
  using u64 = std::uint64_t;
  u64 tokens = 1 + cfg.num_patches();
  if (cfg.ablation.history) tokens += cfg.clip_len;
  if (cfg.ablation.lp_vp) tokens += cfg.vision_prompts;
  if (cfg.ablation.temporal) tokens += cfg.temporal_prompts;
  const u64 d = cfg.vision_dim, f = cfg.vision_dim * cfg.ffn_ratio;
  const u64 per_frame = 4 * tokens * d * d + 2 * tokens * tokens * d + 2 * tokens * d * f;
  return per_frame * cfg.clip_len;
}

}  // namespace vlprvos
