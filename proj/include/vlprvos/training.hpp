// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vlprvos/gradcheck.hpp"
#include "vlprvos/model.hpp"
#include "vlprvos/synth.hpp"

namespace vlprvos {

/// Two consecutive clips of clip_len frames starting at start.
TwoClipBatch make_batch(const SynthVideo& video, std::size_t start, std::size_t clip_len);

struct TrainOptions {
  std::size_t steps = 1;
  std::uint64_t seed = 0;  // video and offset sampling
  std::function<void(std::size_t, const LossBreakdown&)> on_step;
};

/// Each step draws a video and a start offset, then runs one two-clip step.
std::vector<LossBreakdown> train_on_dataset(Model& model, AdamW& opt, const SynthDataset& ds,
                                            const TrainOptions& opts);

/// Clip-by-clip inference wrapped as a dataset predictor.
Predictor model_predictor(const Model& model, std::size_t clip_len);

/// Returns the ground-truth masks.
Predictor oracle_predictor();

/// Finite-difference check of the two-clip loss (history teacher-forced) on one synthetic video
/// drawn with cfg.seed, using clips of frames_per_clip frames. Evaluated at alpha_init = 1 with the
/// head output layer at full init scale.
GradCheckReport model_gradcheck(const ModelConfig& cfg, const GradCheckOptions& opts, std::size_t frames_per_clip);

/// Names of frozen parameters whose values differ between two stores.
std::vector<std::string> frozen_changes(const ParameterStore& before, const ParameterStore& after);

}  // namespace vlprvos
