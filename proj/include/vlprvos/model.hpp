// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "vlprvos/config.hpp"
#include "vlprvos/encoders.hpp"
#include "vlprvos/optim.hpp"
#include "vlprvos/prompts.hpp"
#include "vlprvos/str.hpp"
#include "vlprvos/vlff.hpp"

namespace vlprvos {

inline constexpr double kDiceSmooth = 1.0;
inline constexpr double kFocalClamp = 1e-6;
inline constexpr double kMaskThreshold = 0.5;
/// Output layer of the mask head starts near zero so early masks sit at 0.5.
inline constexpr double kHeadOutInitScale = 0.01;

struct Model {
  ModelConfig cfg;
  ParameterStore params;
};

/// Registers every module. Each module draws from its own seeded stream, so the frozen encoders
/// are identical for every ablation at a given seed.
Model build_model(const ModelConfig& cfg);

/// Bilinear resize [in² → out²] as a matrix, half-pixel centers, edge clamped.
Tensor bilinear_upsample_matrix(std::size_t in_side, std::size_t out_side);

void register_head(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng);

/// fc2(gelu(fc1(x))) per patch: [N_v] logits.
ad::Var head_logits(Binder& b, const ad::Var& tokens);

/// Per-patch logits upsampled to the image and squashed: [image × image] probabilities.
ad::Var segmentation_head(Binder& b, const ModelConfig& cfg, const ad::Var& tokens);

struct LossBreakdown {
  double dice = 0.0;
  double focal = 0.0;
  double total = 0.0;
};

/// w_dice · dice + w_focal · focal over all frames of one clip.
ad::Var total_loss(const std::vector<ad::Var>& probs, const std::vector<Tensor>& targets, const ModelConfig& cfg,
                   LossBreakdown* parts = nullptr);

struct ClipForward {
  std::vector<ad::Var> probs;  // per frame [image × image]
  ClipState state;             // features and predicted masks of this clip
};

/// One clip through the whole model on an existing tape.
ClipForward forward_clip(Binder& b, const ModelConfig& cfg, const std::vector<Tensor>& frames,
                         const std::vector<int>& words, const ClipState& history, const PromptValues& prompts);

/// Learnable prompts after interaction, bound once per pass.
PromptValues bind_prompts(Binder& b, const ModelConfig& cfg);

struct ClipResult {
  std::vector<Tensor> probs;
  ClipState state;
};

/// Inference on a snapshot: no tape, state detached.
ClipResult segment_clip(const Model& model, const std::vector<Tensor>& frames, const std::vector<int>& words,
                        const ClipState& history);

struct TwoClipBatch {
  std::vector<Tensor> frames_a, frames_b;
  std::vector<Tensor> masks_a, masks_b;
  std::vector<int> words;
};

/// Clip A with empty history, clip B with history from A, losses summed.
ad::Var two_clip_loss(Binder& b, const ModelConfig& cfg, const TwoClipBatch& batch, LossBreakdown* parts = nullptr);

/// Forward, backward and one optimizer update.
LossBreakdown train_step_two_clips(Model& model, AdamW& opt, const TwoClipBatch& batch);

/// Consecutive clips of clip_len frames (the last may be shorter), state threaded through.
std::vector<Tensor> infer_video(const Model& model, const std::vector<Tensor>& frames, const std::vector<int>& words,
                                std::size_t clip_len);

/// Directory with config.ini, manifest.txt (name, frozen flag, shape per line) and weights.bin
/// (tensor dumps in manifest order).
void save_checkpoint(const Model& model, const std::string& dir);
Model load_checkpoint(const std::string& dir);

}  // namespace vlprvos
