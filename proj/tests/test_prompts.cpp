// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "vlprvos/errors.hpp"
#include "vlprvos/model.hpp"

using namespace vlprvos;

namespace {

struct Fixture {
  Model model = build_model(toy_config());
  std::mt19937_64 rng{9};

  ClipState random_state(std::size_t frames) {
    ClipState s;
    for (std::size_t t = 0; t < frames; ++t) {
      s.features.push_back(ad::constant(Tensor::randn({64, 32}, rng, 1.0)));
      Tensor mask({32, 32});
      for (auto& v : mask.vec()) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      s.masks.push_back(ad::constant(mask));
    }
    return s;
  }

  /// projection_l(v) computed with scalar loops.
  std::vector<double> project(std::size_t layer, const std::vector<double>& v) const {
    const auto& w = model.params.at("prompts.history.proj" + std::to_string(layer) + ".w").value;
    const auto& b = model.params.at("prompts.history.proj" + std::to_string(layer) + ".b").value;
    std::vector<double> out(64);
    for (std::size_t j = 0; j < 64; ++j) {
      out[j] = b[j];
      for (std::size_t i = 0; i < 32; ++i) out[j] += v[i] * w.at(i, j);
    }
    return out;
  }
};

void expect_row(const Tensor& t, std::size_t row, const std::vector<double>& expect, double tol) {
  for (std::size_t j = 0; j < expect.size(); ++j) EXPECT_NEAR(t.at(row, j), expect[j], tol) << j;
}

}  // namespace

TEST(HistoricalPrompts, AllOnesMaskIsPlainMean) {
  Fixture f;
  auto s = f.random_state(1);
  s.masks[0] = ad::constant(Tensor({32, 32}, 1.0));
  Binder b(f.model.params, false);
  const auto h = make_historical_prompts(b, f.model.cfg, s, 2, 6).value();
  ASSERT_EQ(h.shape(), (Shape{1, 64}));
  std::vector<double> mean(32, 0.0);
  const auto& feat = s.features[0].value();
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t c = 0; c < 32; ++c) mean[c] += feat.at(i, c);
  for (auto& v : mean) v /= 64.0 + kPoolEps;
  expect_row(h, 0, f.project(2, mean), 1e-12);
}

TEST(HistoricalPrompts, EmptyMaskGivesProjectionBias) {
  Fixture f;
  auto s = f.random_state(1);
  s.masks[0] = ad::constant(Tensor({32, 32}));
  Binder b(f.model.params, false);
  const auto h = make_historical_prompts(b, f.model.cfg, s, 0, 6).value();
  expect_row(h, 0, f.model.params.at("prompts.history.proj0.b").value.vec(), 0.0);
}

TEST(HistoricalPrompts, OneHotPatchSelectsItsFeature) {
  Fixture f;
  auto s = f.random_state(1);
  Tensor mask({32, 32});
  const std::size_t k = 19;  // patch row 2, column 3
  for (std::size_t y = 8; y < 12; ++y)
    for (std::size_t x = 12; x < 16; ++x) mask.at(y, x) = 1.0;
  s.masks[0] = ad::constant(mask);
  Binder b(f.model.params, false);
  const auto h = make_historical_prompts(b, f.model.cfg, s, 3, 6).value();
  std::vector<double> fk(32);
  for (std::size_t c = 0; c < 32; ++c) fk[c] = s.features[0].value().at(k, c) / (1.0 + kPoolEps);
  expect_row(h, 0, f.project(3, fk), 1e-12);
}

TEST(HistoricalPrompts, EmptyStateRepeatsNullToken) {
  Fixture f;
  Binder b(f.model.params, false);
  const auto h = make_historical_prompts(b, f.model.cfg, {}, 1, 6).value();
  ASSERT_EQ(h.rows(), 6u);
  for (std::size_t r = 0; r < 6; ++r) expect_row(h, r, f.model.params.at("prompts.history.null").value.vec(), 0.0);
}

TEST(HistoricalPrompts, PureAndPermutationEquivariant) {
  Fixture f;
  auto s = f.random_state(3);
  Binder b(f.model.params, false);
  const auto h = make_historical_prompts(b, f.model.cfg, s, 1, 6).value();
  EXPECT_EQ(make_historical_prompts(b, f.model.cfg, s, 1, 6).value(), h);
  auto swapped = s;
  std::swap(swapped.features[0], swapped.features[2]);
  std::swap(swapped.masks[0], swapped.masks[2]);
  const auto hs = make_historical_prompts(b, f.model.cfg, swapped, 1, 6).value();
  EXPECT_EQ(hs.row(0), h.row(2));
  EXPECT_EQ(hs.row(2), h.row(0));
  EXPECT_EQ(hs.row(1), h.row(1));
}

TEST(HistoricalPrompts, GridMismatchAndLayerRange) {
  Fixture f;
  auto s = f.random_state(1);
  Binder b(f.model.params, false);
  auto bad = s;
  bad.masks[0] = ad::constant(Tensor({16, 16}));
  EXPECT_THROW(make_historical_prompts(b, f.model.cfg, bad, 0, 6), ShapeError);
  bad = s;
  bad.features[0] = ad::constant(Tensor({60, 32}));
  EXPECT_THROW(make_historical_prompts(b, f.model.cfg, bad, 0, 6), ShapeError);
  EXPECT_THROW(make_historical_prompts(b, f.model.cfg, s, 4, 6), ContractError);
}

TEST(AssembleLayerInput, SlotOrderFollowsBracketOrder) {
  std::mt19937_64 rng(0);
  const auto base = Tensor::randn({65, 8}, rng, 1.0), hist = Tensor::randn({6, 8}, rng, 1.0);
  const auto vis = Tensor::randn({10, 8}, rng, 1.0), tmp = Tensor::randn({4, 8}, rng, 1.0);
  const auto g = assemble_layer_input(ad::constant(base), ad::constant(hist), ad::constant(vis), ad::constant(tmp), 1);
  EXPECT_EQ(g.layout, (SlotLayout{64, 6, 10, 4}));
  EXPECT_EQ(g.layout.total(), 85u);
  EXPECT_EQ(g.frame, 1u);
  const auto& t = g.tokens.value();
  EXPECT_EQ(t.row(64), base.row(64));
  EXPECT_EQ(t.row(65), hist.row(0));
  EXPECT_EQ(t.row(71), vis.row(0));
  EXPECT_EQ(t.row(81), tmp.row(0));
  EXPECT_EQ(t.row(84), tmp.row(3));
  const auto bare = assemble_layer_input(ad::constant(base), {}, {}, {}, 0);
  EXPECT_EQ(bare.layout, (SlotLayout{64, 0, 0, 0}));
  EXPECT_EQ(bare.tokens.value(), base);
  EXPECT_THROW(assemble_layer_input(ad::constant(base), ad::constant(Tensor({2, 9})), {}, {}, 0), ShapeError);
}

TEST(AssembleLayerInput, FirstLayerCarriesIdenticalTemporalRows) {
  Fixture f;
  Binder b(f.model.params, false);
  const auto prompts = bind_prompts(b, f.model.cfg);
  std::mt19937_64 rng(4);
  std::vector<ad::Var> frames;
  for (int t = 0; t < 2; ++t) frames.push_back(ad::constant(Tensor::randn({65, 64}, rng, 1.0)));
  const auto g0 = assemble_layer_input(frames[0], {}, vision_prompt_group(prompts, f.model.cfg, 0), prompts.temporal, 0);
  const auto g1 = assemble_layer_input(frames[1], {}, vision_prompt_group(prompts, f.model.cfg, 0), prompts.temporal, 1);
  for (std::size_t r = g0.layout.temporal_offset(); r < g0.layout.total(); ++r) {
    EXPECT_EQ(g0.tokens.value().row(r), g1.tokens.value().row(r));
  }
  EXPECT_EQ(g0.layout.vision_prompts, 10u);
  EXPECT_EQ(g0.layout.temporal_prompts, 4u);
}

TEST(InteractPrompts, ZeroValueAndFfnReducesToProjections) {
  Fixture f;
  f.model.params.at("prompts.interact.layer.attn.v").value.fill(0.0);
  f.model.params.at("prompts.interact.layer.ffn.w2").value.fill(0.0);
  f.model.params.at("prompts.interact.layer.ffn.b2").value.fill(0.0);
  Binder b(f.model.params, false);
  const auto raw = raw_prompts(b, f.model.cfg);
  const auto out = interact_prompts(b, f.model.cfg, raw);
  const auto& s = f.model.params;
  auto compose = [&](const Tensor& p, const std::string& in, const std::string& o) {
    auto h = oracle::matmul(oracle::to_mat(p), oracle::to_mat(s.at(in + ".w").value));
    for (auto& r : h)
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += s.at(in + ".b").value[j];
    auto y = oracle::matmul(h, oracle::to_mat(s.at(o + ".w").value));
    for (auto& r : y)
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += s.at(o + ".b").value[j];
    return y;
  };
  EXPECT_LT(oracle::max_diff(compose(raw.vision.value(), "prompts.interact.in_v", "prompts.interact.out_v"),
                             out.vision.value()), 1e-12);
  EXPECT_LT(oracle::max_diff(compose(raw.temporal.value(), "prompts.interact.in_t", "prompts.interact.out_t"),
                             out.temporal.value()), 1e-12);
  EXPECT_LT(oracle::max_diff(compose(raw.language.value(), "prompts.interact.in_e", "prompts.interact.out_e"),
                             out.language.value()), 1e-12);
}

TEST(InteractPrompts, ShapesPreservedForAnyCounts) {
  for (auto [mv, mt, me] : {std::tuple{10u, 4u, 10u}, std::tuple{1u, 0u, 3u}, std::tuple{0u, 2u, 0u},
                            std::tuple{0u, 0u, 0u}}) {
    auto c = toy_config();
    c.vision_prompts = mv;
    c.temporal_prompts = mt;
    c.language_prompts = me;
    if (mt == 0) c.ablation.prtc = false;
    const auto m = build_model(c);
    Binder b(m.params, false);
    const auto raw = raw_prompts(b, c);
    const auto out = interact_prompts(b, c, raw);
    EXPECT_EQ(out.vision.defined(), mv > 0);
    EXPECT_EQ(out.temporal.defined(), mt > 0);
    EXPECT_EQ(out.language.defined(), me > 0);
    if (mv) {
      EXPECT_EQ(out.vision.shape(), raw.vision.shape());
    }
    if (mt) {
      EXPECT_EQ(out.temporal.shape(), raw.temporal.shape());
    }
    if (me) {
      EXPECT_EQ(out.language.shape(), raw.language.shape());
    }
  }
}

TEST(InteractPrompts, GradientReachesEveryPromptKind) {
  auto c = toy_config();
  c.clip_len = 2;
  const auto m = build_model(c);
  std::mt19937_64 rng(1);
  TwoClipBatch batch;
  for (int t = 0; t < 2; ++t) {
    batch.frames_a.push_back(Tensor::randn({32, 32, 3}, rng, 0.5));
    batch.frames_b.push_back(Tensor::randn({32, 32, 3}, rng, 0.5));
    Tensor mask({32, 32});
    for (std::size_t y = 4; y < 14; ++y)
      for (std::size_t x = 6; x < 18; ++x) mask.at(y, x) = 1.0;
    batch.masks_a.push_back(mask);
    batch.masks_b.push_back(mask);
  }
  batch.words = {0, 4, 11, 3, 14};
  Binder b(m.params);
  ad::backward(two_clip_loss(b, c, batch));
  const auto grads = b.grads();
  for (const char* name : {"prompts.vision", "prompts.temporal", "prompts.language", "prompts.history.null",
                           "prompts.history.proj0.w", "prompts.history.proj3.w"}) {
    EXPECT_GT(l2_norm(grads.at(name).data()), 0.0) << name;
  }
}

TEST(PromptParameters, CountMatchesRegistry) {
  const auto m = build_model(toy_config());
  std::size_t n = 0;
  for (const auto& [name, p] : m.params.all()) {
    if (name.rfind("prompts.", 0) == 0 && name.rfind("prompts.interact.", 0) != 0) n += p.value.size();
  }
  EXPECT_EQ(prompt_parameter_count(m.cfg), n);
  EXPECT_EQ(n, 4u * 10u * 64u + 4u * 64u + 10u * 32u + 4u * 33u * 64u + 64u);
  auto full = full_scale_config();
  EXPECT_EQ(full.temporal_prompts * full.vision_dim, 3072u);
}
