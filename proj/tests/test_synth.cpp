// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <random>

#include "vlprvos/errors.hpp"
#include "vlprvos/synth.hpp"

using namespace vlprvos;
namespace fs = std::filesystem;

namespace {

Tensor mask_from(std::size_t h, std::size_t w, std::initializer_list<std::pair<std::size_t, std::size_t>> on) {
  Tensor m({h, w});
  for (auto [y, x] : on) m.at(y, x) = 1.0;
  return m;
}

Tensor box(std::size_t side, std::size_t y0, std::size_t x0, std::size_t hh, std::size_t ww) {
  Tensor m({side, side});
  for (std::size_t y = y0; y < y0 + hh; ++y)
    for (std::size_t x = x0; x < x0 + ww; ++x) m.at(y, x) = 1.0;
  return m;
}

/// Boundary F by explicit L1 distance search: a boundary pixel counts as matched when the other
/// boundary has a pixel within Manhattan distance tol.
double f_oracle(const Tensor& a, const Tensor& b, std::size_t tol) {
  const long h = static_cast<long>(a.shape()[0]), w = static_cast<long>(a.shape()[1]);
  auto on = [&](const Tensor& m, long y, long x) { return y >= 0 && x >= 0 && y < h && x < w && m.at(y, x) > 0.5; };
  auto edge = [&](const Tensor& m) {
    std::vector<std::pair<long, long>> out;
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x)
        if (on(m, y, x) && !(on(m, y - 1, x) && on(m, y + 1, x) && on(m, y, x - 1) && on(m, y, x + 1)))
          out.emplace_back(y, x);
    return out;
  };
  const auto ea = edge(a), eb = edge(b);
  if (ea.empty() && eb.empty()) return 1.0;
  if (ea.empty() || eb.empty()) return 0.0;
  auto matched = [&](const auto& from, const auto& to) {
    double n = 0;
    for (auto [y, x] : from)
      for (auto [v, u] : to)
        if (static_cast<std::size_t>(std::labs(y - v) + std::labs(x - u)) <= tol) {
          ++n;
          break;
        }
    return n / static_cast<double>(from.size());
  };
  const double p = matched(ea, eb), r = matched(eb, ea);
  return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

std::string temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("vlprvos_synth_" + tag);
  fs::remove_all(p);
  return p.string();
}

}  // namespace

TEST(JMetric, Examples) {
  const auto a = mask_from(2, 2, {{0, 0}, {0, 1}});
  const auto b = mask_from(2, 2, {{0, 1}, {1, 1}});
  EXPECT_DOUBLE_EQ(j_metric(a, a), 1.0);
  EXPECT_DOUBLE_EQ(j_metric(a, b), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(j_metric(a, mask_from(2, 2, {{1, 0}, {1, 1}})), 0.0);
  EXPECT_DOUBLE_EQ(j_metric(Tensor({2, 2}), Tensor({2, 2})), 1.0);
  EXPECT_DOUBLE_EQ(j_metric(Tensor({2, 2}), a), 0.0);
  Tensor soft({2, 2}, std::vector<double>{0.51, 0.5, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(j_metric(soft, mask_from(2, 2, {{0, 0}})), 1.0);
  EXPECT_THROW(j_metric(a, Tensor({3, 3})), ShapeError);
}

TEST(FMetric, Examples) {
  EXPECT_EQ(default_boundary_tolerance(32, 32), 1u);
  EXPECT_EQ(default_boundary_tolerance(480, 854), 8u);
  const auto a = box(16, 4, 4, 6, 6);
  EXPECT_DOUBLE_EQ(f_metric(a, a, 1), 1.0);
  EXPECT_DOUBLE_EQ(f_metric(Tensor({16, 16}), Tensor({16, 16}), 1), 1.0);
  EXPECT_DOUBLE_EQ(f_metric(a, Tensor({16, 16}), 1), 0.0);
  EXPECT_DOUBLE_EQ(f_metric(a, box(16, 4, 5, 6, 6), 1), 1.0);  // one-pixel shift within tolerance
  EXPECT_LT(f_metric(a, box(16, 4, 8, 6, 6), 1), 1.0);
  EXPECT_DOUBLE_EQ(f_metric(a, box(16, 4, 8, 6, 6), 4), 1.0);
  // A solid 3x3 block has an 8-pixel ring; a single pixel is all boundary.
  EXPECT_DOUBLE_EQ(f_metric(box(8, 2, 2, 1, 1), box(8, 2, 2, 1, 1), 0), 1.0);
}

TEST(FMetric, MatchesDistanceOracleAndIsSymmetric) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    Tensor a({12, 12}), b({12, 12});
    const double pa = std::uniform_real_distribution<double>(0.05, 0.7)(rng);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = std::bernoulli_distribution(pa)(rng) ? 1.0 : 0.0;
      b[i] = std::bernoulli_distribution(0.3)(rng) ? 1.0 : 0.0;
    }
    for (std::size_t tol : {0u, 1u, 2u}) {
      EXPECT_NEAR(f_metric(a, b, tol), f_oracle(a, b, tol), 1e-12) << trial << " tol " << tol;
      EXPECT_DOUBLE_EQ(f_metric(a, b, tol), f_metric(b, a, tol));
    }
    EXPECT_DOUBLE_EQ(j_metric(a, b), j_metric(b, a));
  }
}

TEST(Generate, DeterministicAndSeedSensitive) {
  const SynthOptions o{4, 32, 8, 11, 0.5};
  const auto a = generate_dataset(o), b = generate_dataset(o);
  ASSERT_EQ(a.videos.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.videos[i].frames, b.videos[i].frames);
    EXPECT_EQ(a.videos[i].masks, b.videos[i].masks);
    EXPECT_EQ(a.videos[i].words, b.videos[i].words);
  }
  auto o2 = o;
  o2.seed = 12;
  EXPECT_NE(generate_dataset(o2).videos[0].frames, a.videos[0].frames);
  // A video depends only on (seed, index): a longer set shares its prefix.
  auto o3 = o;
  o3.count = 6;
  EXPECT_EQ(generate_dataset(o3).videos[3].frames, a.videos[3].frames);
}

TEST(Generate, EventMixExtremes) {
  for (const auto& v : generate_dataset({10, 32, 12, 1, 1.0}).videos) {
    EXPECT_TRUE(v.event);
    EXPECT_GE(v.event_frame, 4);
    EXPECT_LE(v.event_frame, 9);
    EXPECT_NE(render_words(v.words).find("that was"), std::string::npos);
  }
  for (const auto& v : generate_dataset({10, 32, 12, 1, 0.0}).videos) {
    EXPECT_FALSE(v.event);
    EXPECT_EQ(v.event_frame, -1);
  }
}

TEST(Generate, SceneAudit) {
  const auto ds = generate_dataset({30, 32, 12, 2, 0.5});
  for (const auto& v : ds.videos) {
    ASSERT_EQ(v.frames.size(), 12u);
    const auto& target = v.objects[v.target];
    for (int t = 0; t < 12; ++t) {
      const auto& m = v.masks[static_cast<std::size_t>(t)];
      double area = 0.0;
      for (double x : m.vec()) {
        EXPECT_TRUE(x == 0.0 || x == 1.0);
        area += x;
      }
      EXPECT_GT(area, 0.0) << v.id << " frame " << t;
      // Mask pixels carry the target's color at that frame.
      const auto rgb = color_rgb(target.color_at(t));
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] < 0.5) continue;
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(v.frames[static_cast<std::size_t>(t)][i * 3 + c], rgb[c], 0.5 / 255.0);
      }
      const bool faded = v.event && t >= v.event_frame;
      EXPECT_EQ(frame_resolvable(v, t), !faded) << v.id << " frame " << t;
    }
    // The expression names the target.
    const auto text = render_words(v.words);
    EXPECT_NE(text.find(to_string(target.shape)), std::string::npos);
    EXPECT_NE(text.find(to_string(target.direction)), std::string::npos);
    EXPECT_NE(text.find(to_string(target.color)), std::string::npos);
  }
}

TEST(Generate, RejectsBadOptions) {
  EXPECT_THROW(generate_dataset({0, 32, 12, 0, 0.0}), ContractError);
  EXPECT_THROW(generate_dataset({1, 32, 12, 0, 1.5}), ContractError);
  EXPECT_THROW(generate_dataset({1, 32, 0, 0, 0.0}), ContractError);
  EXPECT_THROW(generate_dataset({1, 8, 12, 0, 0.0}), ContractError);
}

TEST(Vocabulary, IdsRoundTrip) {
  EXPECT_EQ(vocabulary().size(), 18u);
  EXPECT_EQ(word_id("the"), 0);
  EXPECT_EQ(render_words({word_id("the"), word_id("red"), word_id("circle")}), "the red circle");
  EXPECT_THROW(word_id("purple"), ContractError);
  EXPECT_THROW(render_words({99}), ContractError);
}

TEST(Disk, RoundTrip) {
  const auto ds = generate_dataset({3, 32, 6, 4, 0.5});
  const auto dir = temp_dir("rt");
  save_dataset(ds, dir);
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.canvas, ds.canvas);
  EXPECT_EQ(back.frames_per_video, ds.frames_per_video);
  ASSERT_EQ(back.videos.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto &a = ds.videos[i], &b = back.videos[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.seed, b.seed);
    EXPECT_EQ(a.event, b.event);
    EXPECT_EQ(a.event_frame, b.event_frame);
    EXPECT_EQ(a.words, b.words);
    EXPECT_EQ(a.target, b.target);
    EXPECT_EQ(a.objects.size(), b.objects.size());
    EXPECT_EQ(a.frames, b.frames);
    EXPECT_EQ(a.masks, b.masks);
  }
  fs::remove(fs::path(dir) / ds.videos[1].id / "mask_03.pgm");
  EXPECT_THROW(load_dataset(dir), IoError);
  fs::remove_all(dir);
  EXPECT_THROW(load_dataset(dir), IoError);
}

TEST(Evaluate, OracleScoresOne) {
  const auto ds = generate_dataset({6, 32, 8, 5, 0.5});
  const auto r = evaluate_dataset([](const SynthVideo& v) { return v.masks; }, ds);
  EXPECT_DOUBLE_EQ(r.jf, 1.0);
  EXPECT_DOUBLE_EQ(r.j, 1.0);
  EXPECT_DOUBLE_EQ(r.f, 1.0);
  if (r.event_count > 0) {
    EXPECT_DOUBLE_EQ(r.event_jf, 1.0);
  }
  const auto empty = evaluate_dataset(
      [](const SynthVideo& v) { return std::vector<Tensor>(v.masks.size(), Tensor({32, 32})); }, ds);
  EXPECT_DOUBLE_EQ(empty.jf, 0.0);
}

TEST(Evaluate, AveragesFramesThenVideos) {
  const auto ds = generate_dataset({5, 32, 4, 6, 0.6});
  // Predict the truth on even frames and an offset box on odd frames.
  const Predictor pred = [](const SynthVideo& v) {
    std::vector<Tensor> out;
    for (std::size_t t = 0; t < v.masks.size(); ++t) out.push_back(t % 2 ? box(32, 3, 3, 8, 8) : v.masks[t]);
    return out;
  };
  const auto r = evaluate_dataset(pred, ds);
  double j = 0, f = 0, ej = 0, ef = 0;
  std::size_t events = 0;
  for (const auto& v : ds.videos) {
    const auto p = pred(v);
    double vj = 0, vf = 0;
    for (std::size_t t = 0; t < 4; ++t) {
      vj += j_metric(p[t], v.masks[t]);
      vf += f_metric(p[t], v.masks[t], 1);
    }
    j += vj / 4;
    f += vf / 4;
    if (v.event) {
      ++events;
      ej += vj / 4;
      ef += vf / 4;
    }
  }
  EXPECT_NEAR(r.j, j / 5, 1e-12);
  EXPECT_NEAR(r.f, f / 5, 1e-12);
  EXPECT_NEAR(r.jf, (j + f) / 10, 1e-12);
  EXPECT_EQ(r.event_count, events);
  if (events) {
    EXPECT_NEAR(r.event_jf, (ej + ef) / (2.0 * static_cast<double>(events)), 1e-12);
  }
  EXPECT_NE(format_report(r).find("J&F"), std::string::npos);
}
