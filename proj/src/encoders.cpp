// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/encoders.hpp"

#include <cmath>

#include "vlprvos/errors.hpp"
#include "vlprvos/prompts.hpp"
#include "vlprvos/prtc.hpp"

namespace vlprvos {

namespace {

std::string vision_layer_name(std::size_t l) { return "vision.layer" + std::to_string(l); }
std::string language_layer_name(std::size_t l) { return "language.layer" + std::to_string(l); }

}  // namespace

void register_transformer_layer(ParameterStore& store, const std::string& prefix, std::size_t dim,
                                std::size_t ffn_ratio, bool frozen, std::mt19937_64& rng) {
  register_layer_norm(store, prefix + ".ln1", dim, frozen);
  register_attention(store, prefix + ".attn", dim, frozen, rng);
  register_layer_norm(store, prefix + ".ln2", dim, frozen);
  register_ffn(store, prefix + ".ffn", dim, dim * ffn_ratio, frozen, rng);
}

TransformerLayerWeights bind_transformer_layer(Binder& b, const std::string& prefix, std::size_t heads) {
  return {bind_layer_norm(b, prefix + ".ln1"), bind_layer_norm(b, prefix + ".ln2"),
          bind_attention(b, prefix + ".attn", heads), bind_ffn(b, prefix + ".ffn")};
}

void register_vision_encoder(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  const std::size_t patch_in = cfg.patch_size * cfg.patch_size * cfg.channels;
  register_linear(store, "vision.patch_embed", patch_in, cfg.vision_dim, true, true, rng);
  store.add("vision.pos", Tensor::randn({cfg.num_patches(), cfg.vision_dim}, rng, 0.2), true);
  store.add("vision.cls", Tensor::randn({cfg.vision_dim}, rng, 0.5), true);
  for (std::size_t l = 0; l < cfg.vision_layers; ++l) {
    register_transformer_layer(store, vision_layer_name(l), cfg.vision_dim, cfg.ffn_ratio, true, rng);
  }
  register_layer_norm(store, "vision.post_ln", cfg.vision_dim, true);
  // Trainable projection C_v -> C_e, outside the frozen encoder.
  register_linear(store, "vision_proj", cfg.vision_dim, cfg.language_dim, true, false, rng);
}

void register_language_encoder(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  store.add("language.embed", Tensor::randn({cfg.vocab_size + 2, cfg.language_dim}, rng, 1.0), true);
  store.add("language.pos", Tensor::randn({cfg.max_words + 2, cfg.language_dim}, rng, 0.2), true);
  for (std::size_t l = 0; l < cfg.language_layers; ++l) {
    register_transformer_layer(store, language_layer_name(l), cfg.language_dim, cfg.ffn_ratio, true, rng);
  }
  register_layer_norm(store, "language.post_ln", cfg.language_dim, true);
}

TransformerLayerWeights bind_vision_layer(Binder& b, const ModelConfig& cfg, std::size_t layer) {
  return bind_transformer_layer(b, vision_layer_name(layer), cfg.vision_heads);
}

Tensor patchify(const Tensor& frame, const ModelConfig& cfg) {
  const std::size_t s = cfg.image_size, p = cfg.patch_size, ch = cfg.channels, g = cfg.grid_side();
  frame.require_shape({s, s, ch}, "frame");
  Tensor out({g * g, p * p * ch});
  for (std::size_t py = 0; py < g; ++py)
    for (std::size_t px = 0; px < g; ++px) {
      double* row = out.data().data() + (py * g + px) * p * p * ch;
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx)
          for (std::size_t c = 0; c < ch; ++c) {
            *row++ = frame[((py * p + dy) * s + (px * p + dx)) * ch + c];
          }
    }
  return out;
}

ad::Var patch_embed(Binder& b, const ModelConfig& cfg, const Tensor& frame) {
  auto patches = ad::constant(patchify(frame, cfg));
  return ad::add(linear(patches, bind_linear(b, "vision.patch_embed")), b("vision.pos"));
}

ad::Var transformer_layer_forward(const ad::Var& x, const TransformerLayerWeights& w, const ad::Var* cross) {
  auto h = layer_norm(x, w.ln1);
  auto mixed = ad::add(x, multi_head_attention(h, h, w.attn));
  if (cross && cross->defined()) {
    mixed = ad::add(mixed, multi_head_attention(h, layer_norm(*cross, w.ln1), w.attn));
  }
  return ad::add(mixed, ffn_apply(layer_norm(mixed, w.ln2), w.ffn));
}

VisualTokenGrid vision_layer_forward(const VisualTokenGrid& grid, const TransformerLayerWeights& w,
                                     const ad::Var* language) {
  if (grid.tokens.value().rows() != grid.layout.total()) {
    throw ShapeError("token grid has " + std::to_string(grid.tokens.value().rows()) + " rows, layout expects " +
                     std::to_string(grid.layout.total()));
  }
  if (language && language->defined() && language->value().cols() != w.attn.model_dim()) {
    throw ShapeError("linguistic width " + std::to_string(language->value().cols()) + " vs key width " +
                     std::to_string(w.attn.model_dim()));
  }
  return {transformer_layer_forward(grid.tokens, w, language), grid.layout, grid.frame};
}

ad::Var language_for_injection(Binder& b, const ModelConfig& cfg, const LinguisticFeature& lang) {
  if (!cfg.ablation.stage1) return {};
  return ad::matmul(lang.features, b("stage1.lang_to_vision.w"));
}

VisionEncoderOutput vision_encode_clip(Binder& b, const ModelConfig& cfg, const std::vector<Tensor>& frames,
                                       const PromptValues& prompts, const LinguisticFeature& lang,
                                       const ClipState& history, const VisionEncodeOptions& opts) {
  if (frames.empty()) throw ContractError("empty clip");
  const std::size_t clip = frames.size();
  const std::size_t nv = cfg.num_patches();

  ad::Var injected;
  if (!opts.disable_injection) injected = language_for_injection(b, cfg, lang);

  std::vector<ad::Var> tokens(clip);
  auto cls = ad::reshape(b("vision.cls"), {1, cfg.vision_dim});
  for (std::size_t t = 0; t < clip; ++t) tokens[t] = ad::concat_rows({cls, patch_embed(b, cfg, frames[t])});

  const bool temporal_on = cfg.ablation.temporal && prompts.temporal.defined();
  TemporalCarriers carriers;
  if (temporal_on) carriers.assign(clip, prompts.temporal);

  VisionEncoderOutput out;
  out.shallow.resize(clip);
  for (std::size_t l = 0; l < cfg.vision_layers; ++l) {
    const auto weights = bind_vision_layer(b, cfg, l);
    ad::Var hist;
    if (cfg.ablation.history) hist = make_historical_prompts(b, cfg, history, l, clip);
    const ad::Var group = vision_prompt_group(prompts, cfg, l);

    std::vector<ad::Var> hatted(temporal_on ? clip : 0);
    for (std::size_t t = 0; t < clip; ++t) {
      auto grid = assemble_layer_input(tokens[t], hist, group, temporal_on ? carriers[t] : ad::Var{}, t);
      if (l == 0) out.layouts.push_back(grid.layout);
      auto next = vision_layer_forward(grid, weights, injected.defined() ? &injected : nullptr);
      tokens[t] = ad::slice_rows(next.tokens, 0, nv + 1);
      if (temporal_on) hatted[t] = ad::slice_rows(next.tokens, next.layout.temporal_offset(), next.layout.temporal_prompts);
      if (l == 0) out.shallow[t] = ad::slice_rows(next.tokens, 1, nv);
    }
    if (temporal_on) {
      if (cfg.ablation.prtc) {
        std::vector<ad::Var> patches(clip);
        for (std::size_t t = 0; t < clip; ++t) patches[t] = ad::slice_rows(tokens[t], 1, nv);
        carriers = prtc_forward(hatted, patches, weights);
      } else {
        carriers = std::move(hatted);
      }
    }
  }

  const auto post = bind_layer_norm(b, "vision.post_ln");
  const auto proj = bind_linear(b, "vision_proj");
  out.features.reserve(clip);
  for (std::size_t t = 0; t < clip; ++t) out.features.push_back(linear(layer_norm(tokens[t], post), proj));
  return out;
}

LinguisticFeature language_encode(Binder& b, const ModelConfig& cfg, const std::vector<int>& words,
                                  const ad::Var* language_prompts) {
  if (words.empty()) throw ContractError("empty expression");
  if (words.size() > cfg.max_words) throw ContractError("expression longer than max_words");
  auto embed = b("language.embed");
  auto pos = b("language.pos");
  std::vector<ad::Var> rows;
  auto token = [&](std::size_t id, std::size_t position) {
    rows.push_back(ad::add(ad::slice_rows(embed, id, 1), ad::slice_rows(pos, position, 1)));
  };
  token(cfg.vocab_size, 0);  // SOS
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] < 0 || static_cast<std::size_t>(words[i]) >= cfg.vocab_size) {
      throw ContractError("word id " + std::to_string(words[i]) + " outside vocabulary");
    }
    token(static_cast<std::size_t>(words[i]), i + 1);
  }
  const std::size_t eos = words.size() + 1;
  token(cfg.vocab_size + 1, eos);  // EOS
  if (language_prompts && language_prompts->defined()) rows.push_back(*language_prompts);

  auto x = ad::concat_rows(rows);
  for (std::size_t l = 0; l < cfg.language_layers; ++l) {
    x = transformer_layer_forward(x, bind_transformer_layer(b, language_layer_name(l), cfg.language_heads));
  }
  x = layer_norm(x, bind_layer_norm(b, "language.post_ln"));
  return {x, eos, ad::slice_rows(x, eos, 1)};
}

}  // namespace vlprvos
