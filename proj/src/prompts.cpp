// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/prompts.hpp"

#include "vlprvos/errors.hpp"

namespace vlprvos {

namespace {

std::string history_proj_name(std::size_t l) { return "prompts.history.proj" + std::to_string(l); }

bool has_vision_prompts(const ModelConfig& cfg) { return cfg.ablation.lp_vp && cfg.vision_prompts > 0; }
bool has_language_prompts(const ModelConfig& cfg) { return cfg.ablation.lp_vp && cfg.language_prompts > 0; }
bool has_temporal_prompts(const ModelConfig& cfg) { return cfg.ablation.temporal && cfg.temporal_prompts > 0; }

}  // namespace

ClipState ClipState::detached() const {
  ClipState out;
  for (const auto& f : features) out.features.push_back(ad::constant(f.value()));
  for (const auto& m : masks) out.masks.push_back(ad::constant(m.value()));
  return out;
}

void register_prompts(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  const std::size_t cv = cfg.vision_dim, ce = cfg.language_dim;
  if (has_vision_prompts(cfg)) {
    store.add("prompts.vision", Tensor::randn({cfg.vision_layers * cfg.vision_prompts, cv}, rng, kPromptInitStd), false);
  }
  if (has_temporal_prompts(cfg)) {
    store.add("prompts.temporal", Tensor::randn({cfg.temporal_prompts, cv}, rng, kPromptInitStd), false);
  }
  if (has_language_prompts(cfg)) {
    store.add("prompts.language", Tensor::randn({cfg.language_prompts, ce}, rng, kPromptInitStd), false);
  }
  if (cfg.ablation.history) {
    for (std::size_t l = 0; l < cfg.vision_layers; ++l) register_linear(store, history_proj_name(l), ce, cv, true, false, rng);
    store.add("prompts.history.null", Tensor::randn({cv}, rng, kPromptInitStd), false);
  }
  if (has_vision_prompts(cfg) || has_temporal_prompts(cfg) || has_language_prompts(cfg)) {
    if (has_vision_prompts(cfg)) {
      register_linear(store, "prompts.interact.in_v", cv, ce, true, false, rng);
      register_linear(store, "prompts.interact.out_v", ce, cv, true, false, rng);
    }
    if (has_temporal_prompts(cfg)) {
      register_linear(store, "prompts.interact.in_t", cv, ce, true, false, rng);
      register_linear(store, "prompts.interact.out_t", ce, cv, true, false, rng);
    }
    if (has_language_prompts(cfg)) {
      register_linear(store, "prompts.interact.in_e", ce, ce, true, false, rng);
      register_linear(store, "prompts.interact.out_e", ce, ce, true, false, rng);
    }
    register_transformer_layer(store, "prompts.interact.layer", ce, cfg.ffn_ratio, false, rng);
  }
}

PromptValues raw_prompts(Binder& b, const ModelConfig& cfg) {
  PromptValues p;
  if (has_vision_prompts(cfg)) p.vision = b("prompts.vision");
  if (has_temporal_prompts(cfg)) p.temporal = b("prompts.temporal");
  if (has_language_prompts(cfg)) p.language = b("prompts.language");
  return p;
}

PromptValues interact_prompts(Binder& b, const ModelConfig& cfg, const PromptValues& raw) {
  struct Part {
    ad::Var* slot;
    const char* in;
    const char* out;
    std::size_t rows;
  };
  PromptValues out;
  std::vector<Part> parts;
  std::vector<ad::Var> projected;
  auto take = [&](const ad::Var& src, ad::Var* slot, const char* in, const char* o) {
    if (!src.defined()) return;
    parts.push_back({slot, in, o, src.value().rows()});
    projected.push_back(linear(src, bind_linear(b, in)));
  };
  take(raw.vision, &out.vision, "prompts.interact.in_v", "prompts.interact.out_v");
  take(raw.temporal, &out.temporal, "prompts.interact.in_t", "prompts.interact.out_t");
  take(raw.language, &out.language, "prompts.interact.in_e", "prompts.interact.out_e");
  if (parts.empty()) return out;

  auto joint = transformer_layer_forward(ad::concat_rows(projected),
                                         bind_transformer_layer(b, "prompts.interact.layer", cfg.language_heads));
  std::size_t offset = 0;
  for (const auto& part : parts) {
    *part.slot = linear(ad::slice_rows(joint, offset, part.rows), bind_linear(b, part.out));
    offset += part.rows;
  }
  return out;
}

ad::Var vision_prompt_group(const PromptValues& p, const ModelConfig& cfg, std::size_t layer) {
  if (!p.vision.defined()) return {};
  if (layer >= cfg.vision_layers) throw ContractError("vision prompt group beyond L_v");
  return ad::slice_rows(p.vision, layer * cfg.vision_prompts, cfg.vision_prompts);
}

Tensor area_downsample_matrix(const ModelConfig& cfg) {
  const std::size_t s = cfg.image_size, p = cfg.patch_size, g = cfg.grid_side();
  Tensor d({g * g, s * s});
  const double w = 1.0 / static_cast<double>(p * p);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) d.at((y / p) * g + x / p, y * s + x) = w;
  return d;
}

ad::Var make_historical_prompts(Binder& b, const ModelConfig& cfg, const ClipState& state, std::size_t layer,
                                std::size_t clip_len) {
  if (layer >= cfg.vision_layers) throw ContractError("historical prompt layer beyond L_v");
  if (state.empty()) {
    auto null = ad::reshape(b("prompts.history.null"), {1, cfg.vision_dim});
    return ad::concat_rows(std::vector<ad::Var>(clip_len, null));
  }
  if (state.masks.size() != state.features.size()) throw ShapeError("clip state has unequal feature/mask counts");
  const auto down = ad::constant(area_downsample_matrix(cfg));
  std::vector<ad::Var> pooled;
  for (std::size_t i = 0; i < state.frames(); ++i) {
    state.features[i].value().require_shape({cfg.num_patches(), cfg.language_dim}, "history features");
    if (state.masks[i].value().size() != cfg.pixels()) throw ShapeError("history mask does not match the image grid");
    auto weights = ad::matmul(down, ad::reshape(state.masks[i], {cfg.pixels(), 1}));
    pooled.push_back(ad::reshape(ad::masked_pool(weights, state.features[i], kPoolEps), {1, cfg.language_dim}));
  }
  return linear(ad::concat_rows(pooled), bind_linear(b, history_proj_name(layer)));
}

VisualTokenGrid assemble_layer_input(const ad::Var& cls_and_patches, const ad::Var& historical,
                                     const ad::Var& vision_group, const ad::Var& temporal, std::size_t frame) {
  const std::size_t width = cls_and_patches.value().cols();
  SlotLayout layout;
  layout.patches = cls_and_patches.value().rows() - 1;
  std::vector<ad::Var> parts{cls_and_patches};
  auto append = [&](const ad::Var& v, std::size_t& extent) {
    if (!v.defined() || v.value().rows() == 0) return;
    if (v.value().cols() != width) throw ShapeError("prompt width " + std::to_string(v.value().cols()) + " vs " + std::to_string(width));
    extent = v.value().rows();
    parts.push_back(v);
  };
  append(historical, layout.historical);
  append(vision_group, layout.vision_prompts);
  append(temporal, layout.temporal_prompts);
  return {parts.size() == 1 ? cls_and_patches : ad::concat_rows(parts), layout, frame};
}

std::size_t prompt_parameter_count(const ModelConfig& cfg) {
  const std::size_t cv = cfg.vision_dim, ce = cfg.language_dim, lv = cfg.vision_layers;
  std::size_t n = 0;
  if (has_vision_prompts(cfg)) n += lv * cfg.vision_prompts * cv;
  if (has_temporal_prompts(cfg)) n += cfg.temporal_prompts * cv;
  if (has_language_prompts(cfg)) n += cfg.language_prompts * ce;
  if (cfg.ablation.history) n += lv * (ce + 1) * cv + cv;
  return n;
}

}  // namespace vlprvos
