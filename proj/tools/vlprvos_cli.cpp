// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vlprvos/config.hpp"
#include "vlprvos/errors.hpp"
#include "vlprvos/str.hpp"
#include "vlprvos/training.hpp"

namespace {

using namespace vlprvos;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitContract = 2;
constexpr int kExitCheckFailed = 3;

constexpr const char* kSeedEnv = "VLPRVOS_SEED";

std::uint64_t default_seed() {
  const char* env = std::getenv(kSeedEnv);
  if (!env || !*env) return 0;
  try {
    return std::stoull(env);
  } catch (const std::exception&) {
    throw ConfigError(std::string(kSeedEnv) + " is not an unsigned integer");
  }
}

std::uint64_t seed_or_default(const std::optional<std::uint64_t>& seed) { return seed ? *seed : default_seed(); }

int run_gen_data(std::size_t count, std::size_t canvas, std::size_t frames, std::optional<std::uint64_t> seed,
                 double event_mix, const std::string& out) {
  SynthOptions opts{count, canvas, frames, seed_or_default(seed), event_mix};
  const auto ds = generate_dataset(opts);
  save_dataset(ds, out);
  std::size_t events = 0;
  for (const auto& v : ds.videos) events += v.event ? 1 : 0;
  std::printf("videos=%zu events=%zu canvas=%zu frames=%zu out=%s\n", ds.videos.size(), events, canvas, frames,
              out.c_str());
  return kExitOk;
}

int run_train(const std::string& config, const std::string& data, const std::string& out, const std::string& ablate,
              std::size_t steps, std::optional<std::uint64_t> seed) {
  ModelConfig cfg = load_config(config);
  if (seed || std::getenv(kSeedEnv)) cfg.seed = seed_or_default(seed);
  if (!ablate.empty()) cfg.ablation = apply_ablation(cfg.ablation, ablate);
  cfg.validate();
  const auto ds = load_dataset(data);
  if (ds.canvas != cfg.image_size) throw ConfigError("dataset canvas differs from the configured image size");

  Model model = build_model(cfg);
  const ParameterStore initial = model.params;
  AdamW opt(cfg.optimizer);
  std::filesystem::create_directories(out);
  std::ofstream log(std::filesystem::path(out) / "train_log.txt", std::ios::app);
  if (!log) throw IoError("cannot open the training log in " + out);
  std::printf("wiring %s\n", describe_wiring(cfg.ablation).c_str());

  TrainOptions to;
  to.steps = steps;
  to.seed = cfg.seed;
  to.on_step = [&](std::size_t step, const LossBreakdown& l) {
    char line[128];
    std::snprintf(line, sizeof line, "step=%zu dice=%.6f focal=%.6f total=%.6f\n", step + 1, l.dice, l.focal,
                  l.total);
    log << line << std::flush;
    std::fputs(line, stdout);
  };
  train_on_dataset(model, opt, ds, to);
  save_checkpoint(model, (std::filesystem::path(out) / "checkpoint").string());

  const auto changed = frozen_changes(initial, model.params);
  std::printf("frozen_audit=%s changed=%zu\n", changed.empty() ? "pass" : "fail", changed.size());
  return changed.empty() ? kExitOk : kExitContract;
}

int run_eval(const std::string& checkpoint, const std::string& data, std::size_t clip_len) {
  const auto ds = load_dataset(data);
  EvalReport report;
  if (checkpoint == "oracle") {
    report = evaluate_dataset(oracle_predictor(), ds);
  } else {
    // Accept a train --out directory as well as the checkpoint inside it.
    namespace fs = std::filesystem;
    const fs::path nested = fs::path(checkpoint) / "checkpoint";
    const bool is_train_dir = !fs::exists(fs::path(checkpoint) / "config.ini") && fs::is_directory(nested);
    const Model model = load_checkpoint(is_train_dir ? nested.string() : checkpoint);
    report = evaluate_dataset(model_predictor(model, clip_len), ds);
  }
  std::printf("clip_len=%zu\n%s", clip_len, format_report(report).c_str());
  return kExitOk;
}

int run_flops(const std::string& variant, std::size_t tc, std::size_t h, std::size_t w, std::size_t c,
              std::size_t mw) {
  std::vector<AttentionVariant> variants;
  if (variant == "all") {
    variants = {AttentionVariant::kGlobal, AttentionVariant::kW3d, AttentionVariant::kCfMsa};
  } else {
    variants = {parse_attention_variant(variant)};
  }
  bool all_match = true;
  for (auto v : variants) {
    const auto closed = flops_count(v, tc, h, w, c, mw);
    const auto counted = instrumented_flops(v, tc, h, w, c, mw);
    all_match = all_match && closed == counted;
    std::printf("variant=%s tc=%zu h=%zu w=%zu c=%zu mw=%zu closed_form=%llu instrumented=%llu match=%s\n",
                to_string(v).c_str(), tc, h, w, c, mw, static_cast<unsigned long long>(closed),
                static_cast<unsigned long long>(counted), closed == counted ? "true" : "false");
  }
  if (h % mw != 0 || w % mw != 0) {
    std::printf("note=grid not divisible by M_w; cubes wrap cyclically, so edge cubes are smaller and the "
                "closed forms assume full cubes\n");
  }
  return all_match ? kExitOk : kExitCheckFailed;
}

int run_gradcheck(const std::string& config, std::optional<std::uint64_t> seed, std::size_t max_entries,
                  std::size_t frames) {
  ModelConfig cfg = load_config(config);
  if (seed || std::getenv(kSeedEnv)) cfg.seed = seed_or_default(seed);
  GradCheckOptions opts;
  opts.max_entries = max_entries;
  opts.seed = cfg.seed;
  opts.five_point = true;
  const auto report = model_gradcheck(cfg, opts, frames);
  for (const auto& e : report.entries) {
    std::printf("param=%s numel=%zu probed=%zu rel_error=%.3e %s\n", e.name.c_str(), e.numel, e.probed, e.rel_error,
                e.rel_error < opts.tol ? "ok" : "FAIL");
  }
  std::printf("worst=%.3e tol=%.1e result=%s\n", report.worst(), opts.tol, report.passed() ? "pass" : "fail");
  return report.passed() ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-tuned referring video segmentation on synthetic data"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "write a synthetic referring-video dataset");
  std::size_t count = 1, canvas = 32, frames = 12;
  std::optional<std::uint64_t> seed;
  double event_mix = 0.0;
  std::string out;
  gen->add_option("--count", count)->required()->check(CLI::PositiveNumber);
  gen->add_option("--canvas", canvas)->required();
  gen->add_option("--frames", frames, "frames per video")->capture_default_str();
  gen->add_option("--seed", seed);
  gen->add_option("--event-mix", event_mix)->required();
  gen->add_option("--out", out)->required();

  auto* train = app.add_subcommand("train", "two-clip training with optional ablations");
  std::string config, data, ablate;
  std::size_t steps = 200;
  train->add_option("--config", config)->required();
  train->add_option("--data", data)->required();
  train->add_option("--out", out)->required();
  train->add_option("--ablate", ablate, "comma-separated: variant-N, no-temporal, no-lp-vp, no-tp, no-prtc, no-hp, "
                                        "no-stage1, no-stage2, no-stage3, attn=<cfmsa|global|w3d|none>");
  train->add_option("--steps", steps)->capture_default_str();
  train->add_option("--seed", seed);

  auto* eval = app.add_subcommand("eval", "J, F and J&F of a checkpoint ('oracle' scores ground truth)");
  std::string checkpoint;
  std::size_t clip_len = 6;
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--data", data)->required();
  eval->add_option("--clip-len", clip_len)->required()->check(CLI::PositiveNumber);

  auto* flops = app.add_subcommand("flops", "closed-form vs instrumented attention cost");
  flops->set_help_flag("--help", "print this help");  // -h would shadow --h
  std::string variant = "all";
  std::size_t tc = 6, h = 8, w = 8, c = 16, mw = 4;
  flops->add_option("--variant", variant, "cfmsa, global, w3d or all")->capture_default_str();
  flops->add_option("--tc", tc)->capture_default_str();
  flops->add_option("--h", h)->capture_default_str();
  flops->add_option("--w", w)->capture_default_str();
  flops->add_option("--c", c)->capture_default_str();
  flops->add_option("--mw", mw)->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every trainable parameter");
  std::size_t max_entries = 2, clip_frames = 2;
  grad->add_option("--config", config)->required();
  grad->add_option("--seed", seed);
  grad->add_option("--max-entries", max_entries, "entries probed per parameter, 0 = all")->capture_default_str();
  grad->add_option("--clip-frames", clip_frames, "frames per clip in the checked batch")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return run_gen_data(count, canvas, frames, seed, event_mix, out);
    if (train->parsed()) return run_train(config, data, out, ablate, steps, seed);
    if (eval->parsed()) return run_eval(checkpoint, data, clip_len);
    if (flops->parsed()) return run_flops(variant, tc, h, w, c, mw);
    if (grad->parsed()) return run_gradcheck(config, seed, max_entries, clip_frames);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitContract;
  }
  return kExitUsage;
}
