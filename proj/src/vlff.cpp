// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/vlff.hpp"

#include <cmath>

#include "vlprvos/errors.hpp"

namespace vlprvos {

namespace {

std::size_t exact_side(std::size_t n) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) throw ShapeError(std::to_string(n) + " patches do not form a square grid");
  return side;
}

}  // namespace

void register_vlff(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  const std::size_t ce = cfg.language_dim;
  if (!cfg.ablation.stage2) {
    register_linear(store, "vlff.proj", ce, cfg.fusion_dim, true, false, rng);
    return;
  }
  register_attention(store, "vlff.v2l.attn", ce, false, rng);
  store.add("vlff.alpha", Tensor({ce}, std::vector<double>(ce, cfg.alpha_init)), false);
  register_attention(store, "vlff.l2v.attn", ce, false, rng);
  register_linear(store, "vlff.fuse", ce + 1, cfg.fusion_dim, true, false, rng);
}

ad::Var v2l_propagate(const ad::Var& global, const std::vector<ad::Var>& patches, const AttentionParams& block,
                      const ad::Var& alpha) {
  if (alpha.value().size() != global.value().cols()) throw ShapeError("alpha length differs from C_e");
  auto decoded = multi_head_attention(global, ad::concat_rows(patches), block);
  return ad::add(global, ad::mul_rowvec(decoded, alpha));
}

std::vector<ad::Var> l2v_propagate(const std::vector<ad::Var>& patches, const ad::Var& language,
                                   const AttentionParams& block) {
  std::vector<ad::Var> out;
  out.reserve(patches.size());
  for (const auto& f : patches) out.push_back(ad::add(f, multi_head_attention(f, language, block)));
  return out;
}

ad::Var cosine_similarity_map(const ad::Var& patches, const ad::Var& global) {
  return ad::cosine_rows(patches, global, kCosineEps);
}

ad::Var fuse_and_project(const ad::Var& patches, const ad::Var& similarity, const LinearWeights& proj) {
  const std::size_t n = patches.value().rows();
  exact_side(n);
  if (similarity.value().size() != n) throw ShapeError("similarity map length differs from patch count");
  return linear(ad::concat_cols({patches, ad::reshape(similarity, {n, 1})}), proj);
}

Tensor to_spatial(const Tensor& flat) {
  const std::size_t side = exact_side(flat.rows());
  return flat.reshaped({side, side, flat.cols()});
}

Tensor from_spatial(const Tensor& grid) {
  if (grid.shape().size() != 3 || grid.shape()[0] != grid.shape()[1]) throw ShapeError("expected [side × side × C]");
  return grid.reshaped({grid.shape()[0] * grid.shape()[1], grid.shape()[2]});
}

FusionOutput vlff_forward(Binder& b, const ModelConfig& cfg, const std::vector<ad::Var>& encoder_features,
                          const LinguisticFeature& lang) {
  const std::size_t nv = cfg.num_patches();
  std::vector<ad::Var> patches;
  patches.reserve(encoder_features.size());
  for (const auto& f : encoder_features) {
    if (f.value().rows() != nv + 1) throw ShapeError("encoder output must hold CLS + N_v rows");
    patches.push_back(ad::slice_rows(f, 1, nv));
  }

  FusionOutput out;
  if (!cfg.ablation.stage2) {
    const auto proj = bind_linear(b, "vlff.proj");
    for (const auto& f : patches) out.fused.push_back(linear(f, proj));
    out.global = lang.global;
    return out;
  }

  out.global = v2l_propagate(lang.global, patches, bind_attention(b, "vlff.v2l.attn", cfg.language_heads),
                             b("vlff.alpha"));
  const auto enhanced = l2v_propagate(patches, lang.features, bind_attention(b, "vlff.l2v.attn", cfg.language_heads));
  const auto proj = bind_linear(b, "vlff.fuse");
  for (const auto& f : enhanced) {
    auto s = cosine_similarity_map(f, out.global);
    out.fused.push_back(fuse_and_project(f, s, proj));
    out.similarity.push_back(s);
  }
  return out;
}

}  // namespace vlprvos
