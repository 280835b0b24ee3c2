// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vlprvos/tensor.hpp"

namespace vlprvos {

enum class ShapeKind { kSquare, kCircle, kTriangle };
enum class Direction { kLeft, kRight, kUp, kDown };

/// Palette index; kGray is what a target fades to in a disappearance event.
enum class ColorId { kRed, kGreen, kBlue, kYellow, kMagenta, kCyan, kGray };
inline constexpr int kVividColors = 6;

/// Fixed vocabulary. Ids are positions in this list.
const std::vector<std::string>& vocabulary();
int word_id(const std::string& word);
std::string render_words(const std::vector<int>& ids);

std::string to_string(ShapeKind s);
std::string to_string(ColorId c);
std::string to_string(Direction d);
std::array<double, 3> color_rgb(ColorId c);

struct SynthObject {
  ShapeKind shape = ShapeKind::kSquare;
  ColorId color = ColorId::kRed;
  double radius = 4.0;
  double x0 = 0.0, y0 = 0.0;  // center at frame 0, pixel units
  Direction direction = Direction::kRight;
  double speed = 1.0;
  /// Frame from which the object is drawn gray; -1 for never.
  int fade_frame = -1;

  std::array<double, 2> center(int frame) const;
  ColorId color_at(int frame) const;
  bool covers(int frame, double px, double py) const;
};

struct SynthVideo {
  std::string id;
  std::uint64_t seed = 0;
  std::vector<SynthObject> objects;
  std::size_t target = 0;
  bool event = false;
  int event_frame = -1;
  std::vector<int> words;
  std::vector<Tensor> frames;  // [S × S × 3] in [0,1], 8-bit quantized
  std::vector<Tensor> masks;   // [S × S] in {0,1}
};

struct SynthDataset {
  std::size_t canvas = 32;
  std::size_t frames_per_video = 12;
  std::vector<SynthVideo> videos;
};

struct SynthOptions {
  std::size_t count = 1;
  std::size_t canvas = 32;
  std::size_t frames = 12;
  std::uint64_t seed = 0;
  double event_mix = 0.0;
};

/// Pure function of its options. Throws ContractError on bad options and GenerationError-like
/// ContractError after bounded retries when no unambiguous scene can be drawn.
SynthDataset generate_dataset(const SynthOptions& opts);

/// Renders frames and masks from the object list (target drawn last).
void render_video(SynthVideo& video, std::size_t canvas, std::size_t frames);

/// True when the target is the only object of its visible color and shape at this frame.
bool frame_resolvable(const SynthVideo& video, int frame);

/// Disk layout: DIR/metadata.txt (one record per video) and DIR/<id>/frame_NN.ppm, mask_NN.pgm.
void save_dataset(const SynthDataset& ds, const std::string& dir);
SynthDataset load_dataset(const std::string& dir);

void write_ppm(const std::string& path, const Tensor& rgb);
Tensor read_ppm(const std::string& path);
void write_pgm(const std::string& path, const Tensor& gray);
Tensor read_pgm(const std::string& path);

/// Binary masks compare as value > 0.5.
double j_metric(const Tensor& pred, const Tensor& gt);
/// Boundary tolerance ⌈0.008 · diagonal⌉.
std::size_t default_boundary_tolerance(std::size_t height, std::size_t width);
double f_metric(const Tensor& pred, const Tensor& gt, std::size_t tol);

struct VideoScore {
  std::string id;
  bool event = false;
  double j = 0.0, f = 0.0, jf = 0.0;
};

struct EvalReport {
  std::vector<VideoScore> videos;
  double j = 0.0, f = 0.0, jf = 0.0;
  std::size_t event_count = 0;
  double event_j = 0.0, event_f = 0.0, event_jf = 0.0;
};

/// Frame probabilities for a video; one [S × S] map per frame.
using Predictor = std::function<std::vector<Tensor>(const SynthVideo&)>;

/// Per-video means of per-frame J and F over frames, then means over videos (and over the event subset).
EvalReport evaluate_dataset(const Predictor& predict, const SynthDataset& ds);

/// Line-based table: one row per video, then summary rows.
std::string format_report(const EvalReport& r);

}  // namespace vlprvos
