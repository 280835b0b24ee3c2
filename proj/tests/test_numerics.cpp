// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "vlprvos/errors.hpp"
#include "vlprvos/gradcheck.hpp"
#include "vlprvos/nn.hpp"
#include "vlprvos/optim.hpp"

using namespace vlprvos;

namespace {

AttentionParams make_attention(std::size_t d, std::size_t heads, std::mt19937_64& rng) {
  return {ad::constant(Tensor::randn({d, d}, rng, 0.5)), ad::constant(Tensor::randn({d, d}, rng, 0.5)),
          ad::constant(Tensor::randn({d, d}, rng, 0.5)), ad::constant(Tensor::randn({d, d}, rng, 0.5)), heads};
}

oracle::Mat m(const ad::Var& v) { return oracle::to_mat(v.value()); }

}  // namespace

TEST(TensorDump, RoundTripsAndUsesSixteenByteHeader) {
  const Tensor t = Tensor::from_rows({{1.5, -2.0, 3.25}, {0.0, 1e-300, -7.0}});
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 16u + 6u * 8u);
  EXPECT_EQ(bytes.substr(0, 4), "VRT0");
  std::uint32_t rank = 0, e0 = 0, e1 = 0;
  std::memcpy(&rank, bytes.data() + 4, 4);
  std::memcpy(&e0, bytes.data() + 8, 4);
  std::memcpy(&e1, bytes.data() + 12, 4);
  EXPECT_EQ(rank, 2u);
  EXPECT_EQ(e0, 2u);
  EXPECT_EQ(e1, 3u);
  double first = 0.0;
  std::memcpy(&first, bytes.data() + 16, 8);
  EXPECT_EQ(first, 1.5);
  std::stringstream in(bytes);
  EXPECT_EQ(read_tensor(in), t);

  const Tensor cube({2, 3, 4}, 0.5);
  std::stringstream ss3;
  write_tensor(ss3, cube);
  std::stringstream in3(ss3.str());
  EXPECT_EQ(read_tensor(in3), cube);
}

TEST(TensorDump, RejectsBadMagic) {
  std::stringstream in("XXXX0000000000000000");
  EXPECT_THROW(read_tensor(in), IoError);
}

TEST(Tensor, ShapeAndDataMustAgree) { EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1.0}), ShapeError); }

TEST(Attention, SingleTokenGivesOutOfValue) {
  std::mt19937_64 rng(0);
  auto p = make_attention(4, 2, rng);
  auto x = ad::constant(Tensor::randn({1, 4}, rng, 1.0));
  auto y = multi_head_attention(x, x, p);
  auto expect = oracle::matmul(oracle::matmul(m(x), m(p.v_map)), m(p.out_map));
  EXPECT_LT(oracle::max_diff(expect, y.value()), 1e-12);
}

TEST(Attention, ZeroValueMapsAnnihilate) {
  std::mt19937_64 rng(0);
  auto p = make_attention(4, 2, rng);
  p.v_map = ad::constant(Tensor({4, 4}));
  p.out_map = ad::constant(Tensor({4, 4}));
  auto q = ad::constant(Tensor::randn({3, 4}, rng, 1.0));
  auto kv = ad::constant(Tensor::randn({5, 4}, rng, 1.0));
  BoolMatrix mask(3, 5, false);
  for (std::size_t i = 0; i < 3; ++i) mask.set(i, i, true);
  const auto out = multi_head_attention(q, kv, p, &mask);
  for (double v : out.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Attention, ThreeQueriesFiveKeysMatchPerHeadLoop) {
  std::mt19937_64 rng(0);
  auto p = make_attention(8, 2, rng);
  auto q = ad::constant(Tensor::randn({3, 8}, rng, 1.0));
  auto kv = ad::constant(Tensor::randn({5, 8}, rng, 1.0));
  auto y = multi_head_attention(q, kv, p);
  auto expect = oracle::attention(m(q), m(kv), m(p.q_map), m(p.k_map), m(p.v_map), m(p.out_map), 2);
  EXPECT_LT(oracle::max_diff(expect, y.value()), 1e-10);
}

TEST(Attention, MaskedSweepMatchesPerHeadLoop) {
  std::mt19937_64 rng(7);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t heads : {1u, 2u, 4u})
    for (std::size_t nq = 1; nq <= 8; nq += 3)
      for (std::size_t nkv = 1; nkv <= 8; nkv += 2) {
        auto p = make_attention(8, heads, rng);
        auto q = ad::constant(Tensor::randn({nq, 8}, rng, 1.0));
        auto kv = ad::constant(Tensor::randn({nkv, 8}, rng, 1.0));
        BoolMatrix mask(nq, nkv);
        std::vector<std::vector<bool>> allowed(nq, std::vector<bool>(nkv));
        for (std::size_t i = 0; i < nq; ++i) {
          for (std::size_t j = 0; j < nkv; ++j) allowed[i][j] = coin(rng);
          allowed[i][i % nkv] = true;
          for (std::size_t j = 0; j < nkv; ++j) mask.set(i, j, allowed[i][j]);
        }
        auto y = multi_head_attention(q, kv, p, &mask);
        auto expect = oracle::attention(m(q), m(kv), m(p.q_map), m(p.k_map), m(p.v_map), m(p.out_map), heads, allowed);
        EXPECT_LT(oracle::max_diff(expect, y.value()), 1e-10) << heads << " " << nq << " " << nkv;
      }
}

TEST(Attention, RejectsEmptyMaskRowAndWidthMismatch) {
  std::mt19937_64 rng(0);
  auto p = make_attention(4, 2, rng);
  auto x = ad::constant(Tensor::randn({2, 4}, rng, 1.0));
  BoolMatrix mask(2, 2, true);
  mask.set(1, 0, false);
  mask.set(1, 1, false);
  EXPECT_THROW(multi_head_attention(x, x, p, &mask), DegenerateMaskError);
  auto wide = ad::constant(Tensor::randn({2, 6}, rng, 1.0));
  EXPECT_THROW(multi_head_attention(x, wide, p), ShapeError);
  p.head_count = 3;
  EXPECT_THROW(multi_head_attention(x, x, p), ShapeError);
}

TEST(Softmax, MaskedRowsSumToOne) {
  std::mt19937_64 rng(3);
  auto x = ad::constant(Tensor::randn({6, 9}, rng, 3.0));
  BoolMatrix mask(6, 9);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 9; ++j) mask.set(i, j, (i + j) % 3 != 0 || j == i);
  auto p = ad::softmax_rows(x, &mask);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
      s += p.value().at(i, j);
      if (!mask(i, j)) {
        EXPECT_EQ(p.value().at(i, j), 0.0);
      }
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(LayerNorm, ConstantVectorMapsToZero) {
  auto x = ad::constant(Tensor({2, 5}, 3.7));
  auto y = ad::layer_norm(x, ad::constant(Tensor({5}, 1.0)), ad::constant(Tensor({5})), kLayerNormEps);
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, StandardizedInputIsAFixedPoint) {
  const Tensor x({1, 4}, std::vector<double>{1.0, -1.0, 1.0, -1.0});
  auto y = ad::layer_norm(ad::constant(x), ad::constant(Tensor({4}, 1.0)), ad::constant(Tensor({4})), kLayerNormEps);
  // Unit variance, so the only change is the 1/sqrt(1 + eps) factor.
  const double k = 1.0 / std::sqrt(1.0 + kLayerNormEps);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.value()[i], k * x[i], 1e-15);
}

TEST(LayerNorm, MatchesTwoPassOracle) {
  std::mt19937_64 rng(0);
  const Tensor x = Tensor::randn({1, 4}, rng, 2.0), g = Tensor::randn({4}, rng, 1.0), b = Tensor::randn({4}, rng, 1.0);
  auto y = ad::layer_norm(ad::constant(x), ad::constant(g), ad::constant(b), kLayerNormEps);
  const auto expect = oracle::layer_norm(x.vec(), g.vec(), b.vec(), kLayerNormEps);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.value()[i], expect[i], 1e-10);
  EXPECT_THROW(ad::layer_norm(ad::constant(x), ad::constant(Tensor({3}, 1.0)), ad::constant(Tensor({3})), 1e-5),
               ShapeError);
}

TEST(Ffn, ZeroWeightsLeaveOutputBias) {
  const Tensor b2({3}, std::vector<double>{0.5, -1.0, 2.0});
  FfnWeights w{ad::constant(Tensor({2, 4})), ad::constant(Tensor({4}, 0.3)), ad::constant(Tensor({4, 3})),
               ad::constant(b2)};
  auto y = ffn_apply(ad::constant(Tensor({2, 2}, 1.0)), w);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.value().at(r, c), b2[c]);
}

TEST(Ffn, UnitMapsGiveGelu) {
  FfnWeights w{ad::constant(Tensor({1, 1}, 1.0)), ad::constant(Tensor({1})), ad::constant(Tensor({1, 1}, 1.0)),
               ad::constant(Tensor({1}))};
  for (double x : {0.1, 0.5, 1.0, 2.5}) {
    auto y = ffn_apply(ad::constant(Tensor({1, 1}, x)), w);
    EXPECT_NEAR(y.value().item(), x * 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))), 1e-9);
  }
}

TEST(Ffn, MatchesElementwiseLoop) {
  std::mt19937_64 rng(0);
  const Tensor x = Tensor::randn({3, 4}, rng, 1.0);
  const Tensor w1 = Tensor::randn({4, 6}, rng, 0.5), b1 = Tensor::randn({6}, rng, 0.5);
  const Tensor w2 = Tensor::randn({6, 4}, rng, 0.5), b2 = Tensor::randn({4}, rng, 0.5);
  auto y = ffn_apply(ad::constant(x), {ad::constant(w1), ad::constant(b1), ad::constant(w2), ad::constant(b2)});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t o = 0; o < 4; ++o) {
      double acc = b2[o];
      for (std::size_t h = 0; h < 6; ++h) {
        double pre = b1[h];
        for (std::size_t i = 0; i < 4; ++i) pre += x.at(r, i) * w1.at(i, h);
        acc += oracle::gelu(pre) * w2.at(h, o);
      }
      EXPECT_NEAR(y.value().at(r, o), acc, 1e-10);
    }
}

TEST(GradCheck, QuadraticIsExact) {
  ParameterStore store;
  std::mt19937_64 rng(0);
  store.add("p", Tensor::randn({5}, rng, 1.0), false);
  store.add("frozen", Tensor::randn({3}, rng, 1.0), true);
  auto report = finite_diff_grad_check(
      [](Binder& b) {
        auto p = b("p");
        auto f = b("frozen");
        return ad::add(ad::scale(ad::sum(ad::mul(p, p)), 0.5), ad::sum(f));
      },
      store, {});
  ASSERT_EQ(report.entries.size(), 1u);
  EXPECT_EQ(report.entries[0].name, "p");
  EXPECT_LT(report.entries[0].rel_error, 1e-8);
  EXPECT_TRUE(report.passed());
}

TEST(GradCheck, FivePointIsExactOnQuartic) {
  // d/dx x^4 at x=1: the two-point stencil carries a 4h^2 bias, the five-point one none.
  ParameterStore store;
  store.add("p", Tensor({3}, 1.0), false);
  const LossFn quartic = [](Binder& b) {
    auto sq = ad::mul(b("p"), b("p"));
    return ad::sum(ad::mul(sq, sq));
  };
  GradCheckOptions two;
  two.h = 1e-3;
  GradCheckOptions five = two;
  five.five_point = true;
  EXPECT_NEAR(finite_diff_grad_check(quartic, store, two).worst(), 1e-6, 1e-8);
  EXPECT_LT(finite_diff_grad_check(quartic, store, five).worst(), 1e-9);
}

TEST(GradCheck, CorruptedBackwardFails) {
  ParameterStore store;
  std::mt19937_64 rng(0);
  store.add("p", Tensor::randn({4}, rng, 1.0), false);
  // The second term is evaluated off the tape, so its gradient goes missing.
  auto report = finite_diff_grad_check(
      [](Binder& b) {
        auto p = b("p");
        auto cube = ad::sum(ad::mul(ad::mul(p, p), p));
        return ad::add(ad::sum(ad::mul(p, p)), ad::constant(cube.value()));
      },
      store, {});
  EXPECT_FALSE(report.passed());
}

TEST(GradCheck, RejectsNondeterminismAndBadStep) {
  ParameterStore store;
  store.add("p", Tensor({2}, 1.0), false);
  int calls = 0;
  auto flaky = [&](Binder& b) { return ad::add(ad::sum(b("p")), ad::constant(Tensor::scalar(++calls))); };
  EXPECT_THROW(finite_diff_grad_check(flaky, store, {}), DeterminismError);
  GradCheckOptions bad;
  bad.h = 1e-2;
  EXPECT_THROW(finite_diff_grad_check([](Binder& b) { return ad::sum(b("p")); }, store, bad), ContractError);
}

TEST(GradCheck, CompositeOpsPass) {
  ParameterStore store;
  std::mt19937_64 rng(11);
  store.add("x", Tensor::randn({4, 6}, rng, 1.0), false);
  store.add("w", Tensor::randn({6, 6}, rng, 0.4), false);
  store.add("g", Tensor::randn({6}, rng, 1.0), false);
  store.add("beta", Tensor::randn({6}, rng, 0.2), false);
  store.add("pool", Tensor::randn({4}, rng, 1.0), false);
  const Tensor target({4, 6}, std::vector<double>{1, 0, 1, 1, 0, 0, 0, 1, 1, 0, 1, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 1, 1, 1});
  BoolMatrix mask(4, 4, true);
  mask.set(0, 3, false);
  mask.set(2, 1, false);
  auto report = finite_diff_grad_check(
      [&](Binder& b) {
        auto x = b("x");
        auto h = ad::gelu(ad::layer_norm(ad::matmul(x, b("w")), b("g"), b("beta"), kLayerNormEps));
        auto attn = ad::matmul(ad::softmax_rows(ad::matmul_nt(h, x), &mask), h);
        auto probs = ad::sigmoid(attn);
        auto cos = ad::cosine_rows(attn, ad::slice_rows(h, 0, 1), 1e-8);
        auto pooled = ad::masked_pool(ad::sigmoid(b("pool")), attn, 1e-6);
        auto flat = ad::reshape(probs, {24});
        auto loss = ad::add(ad::dice_loss(flat, target.reshaped({24}), 1.0),
                            ad::focal_loss(flat, target.reshaped({24}), 2.0, 0.25, 1e-6));
        return ad::add(loss, ad::add(ad::sum(ad::mul(cos, cos)), ad::sum(ad::mul(pooled, pooled))));
      },
      store, {});
  for (const auto& e : report.entries) EXPECT_LT(e.rel_error, 1e-6) << e.name;
}

TEST(Binder, ReusedParameterAccumulates) {
  ParameterStore store;
  store.add("p", Tensor({1}, 3.0), false);
  Binder b(store);
  auto p1 = b("p");
  auto p2 = b("p");
  auto loss = ad::sum(ad::add(ad::mul(p1, p1), ad::scale(p2, 2.0)));
  ad::backward(loss);
  EXPECT_DOUBLE_EQ(b.grads().at("p")[0], 2.0 * 3.0 + 2.0);
}

TEST(AdamW, SingleScalarStepMatchesHandUpdate) {
  ParameterStore store;
  store.add("p", Tensor({1}, 0.7), false);
  AdamWSettings s;  // lr 5e-5, wd 5e-4, betas 0.9 / 0.999
  AdamW opt(s);
  opt.step(store, {{"p", Tensor({1}, 1.0)}});
  const double m = (1 - 0.9) * 1.0, v = (1 - 0.999) * 1.0;
  const double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
  double p = 0.7;
  p -= 5e-5 * 5e-4 * p;
  p -= 5e-5 * mhat / (std::sqrt(vhat) + s.eps);
  EXPECT_NEAR(store.at("p").value[0], p, 1e-12);
}

TEST(AdamW, FrozenUntouchedAndZeroGradientIdle) {
  ParameterStore store;
  std::mt19937_64 rng(0);
  store.add("frozen", Tensor::randn({4}, rng, 1.0), true);
  store.add("idle", Tensor::randn({3}, rng, 1.0), false);
  const auto frozen = store.at("frozen").value, idle = store.at("idle").value;
  AdamWSettings s;
  s.weight_decay = 0.0;
  AdamW opt(s);
  for (int i = 0; i < 5; ++i) opt.step(store, {{"idle", Tensor({3})}, {"frozen", Tensor({4}, 1.0)}});
  EXPECT_EQ(store.at("frozen").value, frozen);
  EXPECT_EQ(store.at("idle").value, idle);
}

TEST(AdamW, MissingGradientIsAContractError) {
  ParameterStore store;
  store.add("p", Tensor({1}, 1.0), false);
  AdamW opt;
  EXPECT_THROW(opt.step(store, {}), ContractError);
}

TEST(MacCounter, CountsMatmulAndNests) {
  ad::MacCounter outer;
  {
    ad::MacCounter inner;
    ad::matmul(ad::constant(Tensor({3, 4})), ad::constant(Tensor({4, 5})));
    EXPECT_EQ(inner.count(), 60u);
  }
  ad::matmul_nt(ad::constant(Tensor({2, 4})), ad::constant(Tensor({6, 4})));
  EXPECT_EQ(outer.count(), 60u + 48u);
}
