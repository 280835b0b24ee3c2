// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vlprvos/errors.hpp"

namespace vlprvos {

namespace {

enum class Stream : std::uint64_t { kVision = 1, kLanguage, kPrompts, kStage1, kVlff, kStr, kHead };

std::mt19937_64 stream_rng(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

std::vector<double> bilinear_weights_1d(std::size_t in, std::size_t out, std::size_t o, std::size_t* i0,
                                        std::size_t* i1) {
  double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in - 1));
  *i0 = static_cast<std::size_t>(std::floor(src));
  *i1 = std::min(*i0 + 1, in - 1);
  const double frac = src - static_cast<double>(*i0);
  return {1.0 - frac, frac};
}

}  // namespace

Model build_model(const ModelConfig& cfg) {
  cfg.validate();
  Model m{cfg, {}};
  auto rng = stream_rng(cfg.seed, Stream::kVision);
  register_vision_encoder(m.params, cfg, rng);
  rng = stream_rng(cfg.seed, Stream::kLanguage);
  register_language_encoder(m.params, cfg, rng);
  rng = stream_rng(cfg.seed, Stream::kPrompts);
  register_prompts(m.params, cfg, rng);
  if (cfg.ablation.stage1) {
    rng = stream_rng(cfg.seed, Stream::kStage1);
    register_linear(m.params, "stage1.lang_to_vision", cfg.language_dim, cfg.vision_dim, false, false, rng);
  }
  rng = stream_rng(cfg.seed, Stream::kVlff);
  register_vlff(m.params, cfg, rng);
  rng = stream_rng(cfg.seed, Stream::kStr);
  register_str(m.params, cfg, rng);
  rng = stream_rng(cfg.seed, Stream::kHead);
  register_head(m.params, cfg, rng);
  return m;
}

Tensor bilinear_upsample_matrix(std::size_t in_side, std::size_t out_side) {
  if (in_side == 0 || out_side == 0) throw ContractError("bilinear resize of an empty grid");
  Tensor u({out_side * out_side, in_side * in_side});
  for (std::size_t oy = 0; oy < out_side; ++oy) {
    std::size_t y0, y1;
    const auto wy = bilinear_weights_1d(in_side, out_side, oy, &y0, &y1);
    for (std::size_t ox = 0; ox < out_side; ++ox) {
      std::size_t x0, x1;
      const auto wx = bilinear_weights_1d(in_side, out_side, ox, &x0, &x1);
      const std::size_t r = oy * out_side + ox;
      u.at(r, y0 * in_side + x0) += wy[0] * wx[0];
      u.at(r, y0 * in_side + x1) += wy[0] * wx[1];
      u.at(r, y1 * in_side + x0) += wy[1] * wx[0];
      u.at(r, y1 * in_side + x1) += wy[1] * wx[1];
    }
  }
  return u;
}

void register_head(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  register_linear(store, "head.fc1", cfg.fusion_dim, cfg.fusion_dim, true, false, rng);
  register_linear(store, "head.fc2", cfg.fusion_dim, 1, true, false, rng);
  // Start near a uniform 0.5 mask.
  for (auto& v : store.at("head.fc2.w").value.data()) v *= kHeadOutInitScale;
}

ad::Var head_logits(Binder& b, const ad::Var& tokens) {
  auto h = ad::gelu(linear(tokens, bind_linear(b, "head.fc1")));
  return ad::reshape(linear(h, bind_linear(b, "head.fc2")), {tokens.value().rows()});
}

ad::Var segmentation_head(Binder& b, const ModelConfig& cfg, const ad::Var& tokens) {
  const std::size_t nv = cfg.num_patches();
  if (tokens.value().rows() != nv) throw ShapeError("head expects N_v tokens");
  auto logits = ad::reshape(head_logits(b, tokens), {nv, 1});
  auto up = ad::matmul(ad::constant(bilinear_upsample_matrix(cfg.grid_side(), cfg.image_size)), logits);
  return ad::reshape(ad::sigmoid(up), {cfg.image_size, cfg.image_size});
}

ad::Var total_loss(const std::vector<ad::Var>& probs, const std::vector<Tensor>& targets, const ModelConfig& cfg,
                   LossBreakdown* parts) {
  if (probs.size() != targets.size() || probs.empty()) throw ShapeError("one target mask per predicted frame");
  std::vector<ad::Var> rows;
  std::vector<double> target;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const std::size_t n = probs[t].value().size();
    if (n != targets[t].size()) throw ShapeError("mask/target size mismatch");
    rows.push_back(ad::reshape(probs[t], {1, n}));
    target.insert(target.end(), targets[t].data().begin(), targets[t].data().end());
  }
  auto pred = ad::reshape(ad::concat_rows(rows), {target.size()});
  const std::size_t count = target.size();
  const Tensor y({count}, std::move(target));
  auto dice = ad::dice_loss(pred, y, kDiceSmooth);
  auto focal = ad::focal_loss(pred, y, cfg.focal_gamma, cfg.focal_alpha, kFocalClamp);
  auto total = ad::add(ad::scale(dice, cfg.w_dice), ad::scale(focal, cfg.w_focal));
  if (parts) {
    parts->dice += dice.value().item();
    parts->focal += focal.value().item();
    parts->total += total.value().item();
  }
  return total;
}

PromptValues bind_prompts(Binder& b, const ModelConfig& cfg) { return interact_prompts(b, cfg, raw_prompts(b, cfg)); }

ClipForward forward_clip(Binder& b, const ModelConfig& cfg, const std::vector<Tensor>& frames,
                         const std::vector<int>& words, const ClipState& history, const PromptValues& prompts) {
  if (frames.empty()) throw ContractError("empty clip");
  if (frames.size() > cfg.clip_len) throw ContractError("clip longer than T_c");
  const std::size_t nv = cfg.num_patches(), side = cfg.grid_side();

  const auto lang = language_encode(b, cfg, words, prompts.language.defined() ? &prompts.language : nullptr);
  const auto enc = vision_encode_clip(b, cfg, frames, prompts, lang, history);
  const auto fusion = vlff_forward(b, cfg, enc.features, lang);

  const CubeSpec spec{frames.size(), side, side, cfg.cube_size, 0};
  const auto patterns = build_str_patterns(cfg.ablation.attention, spec);
  const auto weights = bind_str(b, cfg);
  const auto memory = str_memory(lang.features, cfg.ablation.stage3 ? enc.shallow : std::vector<ad::Var>{}, weights);
  const auto reasoned = str_forward(ad::concat_rows(fusion.fused), memory, patterns, weights);

  ClipForward out;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    out.probs.push_back(segmentation_head(b, cfg, ad::slice_rows(reasoned, t * nv, nv)));
    out.state.features.push_back(ad::slice_rows(enc.features[t], 1, nv));
    out.state.masks.push_back(out.probs.back());
  }
  return out;
}

ClipResult segment_clip(const Model& model, const std::vector<Tensor>& frames, const std::vector<int>& words,
                        const ClipState& history) {
  Binder b(model.params, false);
  const auto prompts = bind_prompts(b, model.cfg);
  auto fwd = forward_clip(b, model.cfg, frames, words, history.detached(), prompts);
  ClipResult out;
  for (const auto& p : fwd.probs) out.probs.push_back(p.value());
  out.state = fwd.state.detached();
  return out;
}

ad::Var two_clip_loss(Binder& b, const ModelConfig& cfg, const TwoClipBatch& batch, LossBreakdown* parts) {
  const auto prompts = bind_prompts(b, cfg);
  auto a = forward_clip(b, cfg, batch.frames_a, batch.words, ClipState{}, prompts);
  ClipState history = a.state;
  if (cfg.teacher_forcing) {
    for (std::size_t t = 0; t < history.masks.size(); ++t) history.masks[t] = ad::constant(batch.masks_a[t]);
  }
  auto bfwd = forward_clip(b, cfg, batch.frames_b, batch.words, history, prompts);
  auto la = total_loss(a.probs, batch.masks_a, cfg, parts);
  auto lb = total_loss(bfwd.probs, batch.masks_b, cfg, parts);
  return ad::add(la, lb);
}

LossBreakdown train_step_two_clips(Model& model, AdamW& opt, const TwoClipBatch& batch) {
  Binder b(model.params);
  LossBreakdown parts;
  auto loss = two_clip_loss(b, model.cfg, batch, &parts);
  ad::backward(loss);
  opt.step(model.params, b.grads());
  return parts;
}

std::vector<Tensor> infer_video(const Model& model, const std::vector<Tensor>& frames, const std::vector<int>& words,
                                std::size_t clip_len) {
  if (clip_len == 0) throw ContractError("clip length must be at least 1");
  std::vector<Tensor> out;
  out.reserve(frames.size());
  ClipState state;
  for (std::size_t start = 0; start < frames.size(); start += clip_len) {
    const std::size_t end = std::min(frames.size(), start + clip_len);
    std::vector<Tensor> clip(frames.begin() + static_cast<std::ptrdiff_t>(start),
                             frames.begin() + static_cast<std::ptrdiff_t>(end));
    auto r = segment_clip(model, clip, words, state);
    for (auto& p : r.probs) out.push_back(std::move(p));
    state = std::move(r.state);
  }
  return out;
}

void save_checkpoint(const Model& model, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  {
    std::ofstream cfg(fs::path(dir) / "config.ini");
    cfg << serialize_config(model.cfg);
    if (!cfg) throw IoError("cannot write " + dir + "/config.ini");
  }
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  std::ofstream weights(fs::path(dir) / "weights.bin", std::ios::binary);
  if (!manifest || !weights) throw IoError("cannot write checkpoint files in " + dir);
  for (const auto& [name, p] : model.params.all()) {
    manifest << name << ' ' << (p.frozen ? 1 : 0);
    for (auto e : p.value.shape()) manifest << ' ' << e;
    manifest << '\n';
    write_tensor(weights, p.value);
  }
  if (!manifest || !weights) throw IoError("short write in " + dir);
}

Model load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory " + dir + " not found");
  Model model = build_model(load_config((fs::path(dir) / "config.ini").string()));
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  std::ifstream weights(fs::path(dir) / "weights.bin", std::ios::binary);
  if (!manifest || !weights) throw IoError("checkpoint in " + dir + " is incomplete");
  std::string line;
  std::size_t seen = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string name;
    int frozen = 0;
    ss >> name >> frozen;
    Shape shape;
    for (std::size_t e; ss >> e;) shape.push_back(e);
    if (!model.params.contains(name)) throw IoError("checkpoint parameter " + name + " unknown to its config");
    auto& p = model.params.at(name);
    Tensor value = read_tensor(weights);
    if (value.shape() != shape || shape != p.value.shape() || (frozen != 0) != p.frozen) {
      throw IoError("checkpoint entry " + name + " disagrees with the manifest or config");
    }
    p.value = std::move(value);
    ++seen;
  }
  if (seen != model.params.all().size()) throw IoError("checkpoint holds " + std::to_string(seen) + " of " +
                                                       std::to_string(model.params.all().size()) + " parameters");
  return model;
}

}  // namespace vlprvos
