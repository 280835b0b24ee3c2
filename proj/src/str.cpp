// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/str.hpp"

#include "vlprvos/errors.hpp"

namespace vlprvos {

namespace {

std::string block_name(std::size_t i) { return "str.block" + std::to_string(i); }

bool two_pass(AttentionVariant v) { return v == AttentionVariant::kCfMsa || v == AttentionVariant::kW3d; }

CubeSpec make_spec(std::size_t tc, std::size_t h, std::size_t w, std::size_t mw) {
  CubeSpec s{tc, h, w, mw, 0};
  s.validate();
  return s;
}

}  // namespace

void CubeSpec::validate() const {
  if (frames == 0 || height == 0 || width == 0) throw ContractError("empty space-time grid");
  if (window == 0 || window > height || window > width) {
    throw ContractError("cube window " + std::to_string(window) + " does not fit a " + std::to_string(height) + "x" +
                        std::to_string(width) + " grid");
  }
  if (shift != 0 && shift != window / 2) throw ContractError("shift must be 0 or floor(M_w/2)");
}

CubeSpec CubeSpec::shifted() const {
  CubeSpec s = *this;
  s.shift = window / 2;
  return s;
}

std::vector<std::size_t> cube_partition(const CubeSpec& spec) {
  spec.validate();
  std::vector<std::size_t> ids(spec.tokens());
  const std::size_t per_row = spec.cubes_per_row();
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t y = 0; y < spec.height; ++y)
      for (std::size_t x = 0; x < spec.width; ++x) {
        const std::size_t cy = ((y + spec.shift) % spec.height) / spec.window;
        const std::size_t cx = ((x + spec.shift) % spec.width) / spec.window;
        ids[(t * spec.height + y) * spec.width + x] = cy * per_row + cx;
      }
  return ids;
}

namespace {

AttentionPattern build_pattern(const CubeSpec& spec, bool same_frame_allowed) {
  const auto ids = cube_partition(spec);
  const std::size_t n = spec.tokens(), frame = spec.height * spec.width;
  AttentionPattern p(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      const bool same_frame = a / frame == b / frame;
      p.set(a, b, ids[a] == ids[b] || (same_frame_allowed && same_frame));
    }
  return p;
}

}  // namespace

AttentionPattern build_cfmsa_mask(const CubeSpec& spec) { return build_pattern(spec, true); }
AttentionPattern build_w3d_mask(const CubeSpec& spec) { return build_pattern(spec, false); }
AttentionPattern build_global_mask(std::size_t tokens) { return AttentionPattern(tokens, tokens, true); }

std::uint64_t allowed_pair_count(const AttentionPattern& p) {
  std::uint64_t n = 0;
  for (auto bit : p.bits) n += bit;
  return n;
}

std::uint64_t flops_count(AttentionVariant variant, std::size_t tc, std::size_t h, std::size_t w, std::size_t c,
                          std::size_t mw) {
  using u64 = std::uint64_t;
  const u64 T = tc, HW = static_cast<u64>(h) * w, C = c, M2 = static_cast<u64>(mw) * mw;
  switch (variant) {
    case AttentionVariant::kGlobal: return 2 * (T * HW) * (T * HW) * C;
    case AttentionVariant::kW3d: return 2 * M2 * T * T * HW * C;
    case AttentionVariant::kCfMsa: return 2 * T * HW * ((T - 1) * M2 + HW) * C;
    case AttentionVariant::kNone: return 0;
  }
  return 0;
}

std::uint64_t instrumented_flops(AttentionVariant variant, std::size_t tc, std::size_t h, std::size_t w,
                                 std::size_t c, std::size_t mw) {
  if (variant == AttentionVariant::kNone) return 0;
  const auto spec = make_spec(tc, h, w, mw);
  const auto pattern = variant == AttentionVariant::kGlobal ? build_global_mask(spec.tokens())
                       : variant == AttentionVariant::kW3d  ? build_w3d_mask(spec)
                                                            : build_cfmsa_mask(spec);
  ad::MacCounter counter;
  for (std::size_t q = 0; q < pattern.rows; ++q)
    for (std::size_t k = 0; k < pattern.cols; ++k) {
      if (!pattern(q, k)) continue;
      counter.add(c);  // score q·k
      counter.add(c);  // weight × value
    }
  return counter.count();
}

void register_str(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  const std::size_t c = cfg.fusion_dim;
  register_linear(store, "str.shallow_proj", cfg.vision_dim, c, true, false, rng);
  register_linear(store, "str.lang_proj", cfg.language_dim, c, true, false, rng);
  for (std::size_t i = 0; i < cfg.str_depth; ++i) {
    const std::string enc = block_name(i) + ".enc", dec = block_name(i) + ".dec";
    if (cfg.ablation.attention != AttentionVariant::kNone) {
      register_layer_norm(store, enc + ".ln_a", c, false);
      register_attention(store, enc + ".attn_a", c, false, rng);
    }
    if (two_pass(cfg.ablation.attention)) {
      register_layer_norm(store, enc + ".ln_b", c, false);
      register_attention(store, enc + ".attn_b", c, false, rng);
    }
    register_layer_norm(store, enc + ".ln_f", c, false);
    register_ffn(store, enc + ".ffn", c, c * cfg.ffn_ratio, false, rng);
    register_layer_norm(store, dec + ".ln_q", c, false);
    register_attention(store, dec + ".attn", c, false, rng);
    register_layer_norm(store, dec + ".ln_f", c, false);
    register_ffn(store, dec + ".ffn", c, c * cfg.ffn_ratio, false, rng);
  }
}

StrWeights bind_str(Binder& b, const ModelConfig& cfg) {
  StrWeights w;
  w.shallow_proj = bind_linear(b, "str.shallow_proj");
  w.lang_proj = bind_linear(b, "str.lang_proj");
  const std::size_t heads = cfg.fusion_heads;
  for (std::size_t i = 0; i < cfg.str_depth; ++i) {
    const std::string enc = block_name(i) + ".enc", dec = block_name(i) + ".dec";
    StrEncoderWeights e;
    if (cfg.ablation.attention != AttentionVariant::kNone) {
      e.ln_a = bind_layer_norm(b, enc + ".ln_a");
      e.attn_a = bind_attention(b, enc + ".attn_a", heads);
    }
    if (two_pass(cfg.ablation.attention)) {
      e.ln_b = bind_layer_norm(b, enc + ".ln_b");
      e.attn_b = bind_attention(b, enc + ".attn_b", heads);
    }
    e.ln_f = bind_layer_norm(b, enc + ".ln_f");
    e.ffn = bind_ffn(b, enc + ".ffn");
    w.encoders.push_back(e);
    w.decoders.push_back({bind_layer_norm(b, dec + ".ln_q"), bind_layer_norm(b, dec + ".ln_f"),
                          bind_attention(b, dec + ".attn", heads), bind_ffn(b, dec + ".ffn")});
  }
  return w;
}

StrPatterns build_str_patterns(AttentionVariant variant, const CubeSpec& spec) {
  StrPatterns p;
  p.variant = variant;
  switch (variant) {
    case AttentionVariant::kCfMsa:
      p.first = build_cfmsa_mask(spec);
      p.second = build_cfmsa_mask(spec.shifted());
      break;
    case AttentionVariant::kW3d:
      p.first = build_w3d_mask(spec);
      p.second = build_w3d_mask(spec.shifted());
      break;
    case AttentionVariant::kGlobal:
    case AttentionVariant::kNone:
      spec.validate();
      break;
  }
  return p;
}

ad::Var str_encoder_forward(const ad::Var& x, const StrPatterns& patterns, const StrEncoderWeights& w) {
  const std::size_t n = x.value().rows();
  ad::Var h = x;
  if (two_pass(patterns.variant)) {
    if (patterns.first.rows != n || patterns.second.rows != n) {
      throw ShapeError("pattern over " + std::to_string(patterns.first.rows) + " tokens, features hold " +
                       std::to_string(n));
    }
    auto a = layer_norm(h, w.ln_a);
    h = ad::add(h, multi_head_attention(a, a, w.attn_a, &patterns.first));
    auto s = layer_norm(h, w.ln_b);
    h = ad::add(h, multi_head_attention(s, s, w.attn_b, &patterns.second));
  } else if (patterns.variant == AttentionVariant::kGlobal) {
    auto a = layer_norm(h, w.ln_a);
    h = ad::add(h, multi_head_attention(a, a, w.attn_a));
  }
  return ad::add(h, ffn_apply(layer_norm(h, w.ln_f), w.ffn));
}

ad::Var str_decoder_forward(const ad::Var& x, const ad::Var& memory, const StrDecoderWeights& w) {
  auto h = ad::add(x, multi_head_attention(layer_norm(x, w.ln_q), memory, w.attn));
  return ad::add(h, ffn_apply(layer_norm(h, w.ln_f), w.ffn));
}

ad::Var str_memory(const ad::Var& language, const std::vector<ad::Var>& shallow, const StrWeights& w) {
  std::vector<ad::Var> parts{linear(language, w.lang_proj)};
  for (const auto& s : shallow) parts.push_back(linear(s, w.shallow_proj));
  return parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
}

ad::Var str_forward(const ad::Var& x, const ad::Var& memory, const StrPatterns& patterns, const StrWeights& w) {
  if (w.encoders.size() != w.decoders.size()) throw ShapeError("STR encoder/decoder depth mismatch");
  ad::Var h = x;
  for (std::size_t i = 0; i < w.encoders.size(); ++i) {
    h = str_encoder_forward(h, patterns, w.encoders[i]);
    h = str_decoder_forward(h, memory, w.decoders[i]);
  }
  return h;
}

}  // namespace vlprvos
