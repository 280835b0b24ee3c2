// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "vlprvos/errors.hpp"
#include "vlprvos/model.hpp"
#include "vlprvos/prtc.hpp"

using namespace vlprvos;

namespace {

struct Rig {
  ModelConfig cfg = toy_config();
  Model model = build_model(cfg);
  Binder binder{model.params, false};
  TransformerLayerWeights layer = bind_vision_layer(binder, cfg, 1);
  std::mt19937_64 rng{17};

  std::vector<ad::Var> rand(std::size_t n, std::size_t rows, double sd = 1.0) {
    std::vector<ad::Var> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(ad::constant(Tensor::randn({rows, 64}, rng, sd)));
    return out;
  }
};

}  // namespace

TEST(Prtc, ShapesPreserved) {
  Rig s;
  const auto carriers = s.rand(3, 4);
  const auto out = prtc_forward(carriers, s.rand(3, 64), s.layer);
  ASSERT_EQ(out.size(), 3u);
  for (const auto& c : out) EXPECT_EQ(c.shape(), (Shape{4, 64}));
}

TEST(Prtc, IdenticalInputsGiveIdenticalCarriers) {
  Rig s;
  const auto one = s.rand(1, 4);
  const auto patches = s.rand(1, 64);
  const auto out = prtc_forward({one[0], one[0], one[0]}, {patches[0], patches[0], patches[0]}, s.layer);
  EXPECT_EQ(out[0].value(), out[1].value());
  EXPECT_EQ(out[1].value(), out[2].value());
}

TEST(Prtc, AddsNoParameters) {
  auto with = toy_config();
  auto without = with;
  without.ablation.prtc = false;
  const auto m_with = build_model(with), m_without = build_model(without);
  EXPECT_EQ(m_with.params.all().size(), m_without.params.all().size());
  std::size_t a = 0, b = 0;
  for (const auto& [n, p] : m_with.params.all()) a += p.value.size();
  for (const auto& [n, p] : m_without.params.all()) b += p.value.size();
  EXPECT_EQ(a, b);
}

TEST(Prtc, InformationCrossesFrames) {
  Rig s;
  auto carriers = s.rand(2, 4);
  auto patches = s.rand(2, 64);
  const auto base = prtc_forward(carriers, patches, s.layer);
  // Perturb only frame 1's patches; frame 0's carrier must move.
  auto moved = patches;
  moved[1] = ad::constant(Tensor::randn({64, 64}, s.rng, 1.0));
  const auto out = prtc_forward(carriers, moved, s.layer);
  EXPECT_GT(max_abs_diff(out[0].value(), base[0].value()), 1e-6);
  // Perturb only frame 1's carrier; frame 0's carrier must move too.
  auto carriers2 = carriers;
  carriers2[1] = ad::constant(Tensor::randn({4, 64}, s.rng, 1.0));
  EXPECT_GT(max_abs_diff(prtc_forward(carriers2, patches, s.layer)[0].value(), base[0].value()), 1e-6);
}

TEST(Prtc, FramesIndependentWhenDisabled) {
  // With prtc off, the per-frame temporal carrier of frame 0 never sees frame 1.
  auto c = toy_config();
  c.ablation.prtc = false;
  c.ablation.history = false;
  c.ablation.stage2 = false;
  const auto m = build_model(c);
  std::mt19937_64 rng(3);
  std::vector<Tensor> frames;
  for (int i = 0; i < 2; ++i) frames.push_back(Tensor::randn({32, 32, 3}, rng, 0.5));
  Binder b(m.params, false);
  const auto prompts = bind_prompts(b, c);
  const auto lang = language_encode(b, c, {0, 4, 11}, &prompts.language);
  const auto base = vision_encode_clip(b, c, frames, prompts, lang, {}, {});
  auto changed = frames;
  changed[1] = Tensor::randn({32, 32, 3}, rng, 0.5);
  const auto out = vision_encode_clip(b, c, changed, prompts, lang, {}, {});
  EXPECT_EQ(max_abs_diff(base.features[0].value(), out.features[0].value()), 0.0);
}

TEST(Prtc, ZeroCarriersPassThrough) {
  Rig s;
  std::vector<ad::Var> empty(2, ad::constant(Tensor({0, 64})));
  const auto out = prtc_forward(empty, s.rand(2, 64), s.layer);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].value().rows(), 0u);
}

TEST(Prtc, ShapeErrors) {
  Rig s;
  EXPECT_THROW(prtc_forward({}, s.rand(1, 64), s.layer), ContractError);
  auto bad = s.rand(2, 4);
  bad[1] = ad::constant(Tensor({3, 64}));
  EXPECT_THROW(prtc_forward(bad, s.rand(2, 64), s.layer), ShapeError);
  auto narrow = s.rand(1, 4);
  narrow[0] = ad::constant(Tensor({4, 32}));
  EXPECT_THROW(prtc_forward(narrow, s.rand(1, 64), s.layer), ShapeError);
}

TEST(PrtcFlops, ClosedFormMatchesInstrumentedRun) {
  Rig s;
  s.cfg.clip_len = 2;
  const auto carriers = s.rand(2, 4);
  const auto patches = s.rand(2, 64);
  std::uint64_t measured = 0;
  {
    ad::MacCounter counter;
    prtc_forward(carriers, patches, s.layer);
    measured = counter.count();
  }
  EXPECT_EQ(measured, prtc_flops(s.cfg).total());
}

TEST(PrtcFlops, AttentionShareBelowFivePercent) {
  for (std::size_t t : {1u, 2u, 6u}) {
    auto c = toy_config();
    c.clip_len = t;
    const auto f = prtc_flops(c);
    EXPECT_LT(static_cast<double>(f.attention), 0.05 * static_cast<double>(vision_layer_flops(c))) << t;
    EXPECT_GT(f.projection, 0u);
  }
  auto off = toy_config();
  off.temporal_prompts = 0;
  EXPECT_EQ(prtc_flops(off).total(), 0u);
}

TEST(PrtcFlops, VisionLayerCountMatchesInstrumentedRun) {
  auto c = toy_config();
  c.clip_len = 2;
  c.ablation.stage1 = false;
  const auto m = build_model(c);
  Binder b(m.params, false);
  std::mt19937_64 rng(5);
  std::uint64_t measured = 0;
  const auto w = bind_vision_layer(b, c, 0);
  const auto prompts = bind_prompts(b, c);
  ClipState hist;
  for (int t = 0; t < 2; ++t) {
    hist.features.push_back(ad::constant(Tensor::randn({64, 32}, rng, 1.0)));
    hist.masks.push_back(ad::constant(Tensor({32, 32}, 0.5)));
  }
  const auto h = make_historical_prompts(b, c, hist, 0, 2);
  std::vector<VisualTokenGrid> grids;
  for (std::size_t t = 0; t < 2; ++t) {
    grids.push_back(assemble_layer_input(ad::constant(Tensor::randn({65, 64}, rng, 1.0)), h,
                                         vision_prompt_group(prompts, c, 0), prompts.temporal, t));
  }
  {
    ad::MacCounter counter;
    for (const auto& g : grids) vision_layer_forward(g, w, nullptr);
    measured = counter.count();
  }
  EXPECT_EQ(measured, vision_layer_flops(c));
}
