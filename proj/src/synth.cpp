// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "vlprvos/errors.hpp"

namespace vlprvos {

namespace {

constexpr int kMaxRetries = 500;
constexpr double kMinRadius = 3.5;
constexpr double kMaxRadius = 5.0;

namespace fs = std::filesystem;

template <typename E>
E pick(std::mt19937_64& rng, int n) {
  return static_cast<E>(std::uniform_int_distribution<int>(0, n - 1)(rng));
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::uint64_t video_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedu};
  std::mt19937_64 rng(seq);
  return rng();
}

void place(SynthObject& o, std::mt19937_64& rng, double canvas, int frames) {
  const double travel = o.speed * (frames - 1);
  const double lo = o.radius, hi = canvas - o.radius;
  double along_lo = lo, along_hi = hi - travel;
  if (o.direction == Direction::kLeft || o.direction == Direction::kUp) {
    along_lo = lo + travel;
    along_hi = hi;
  }
  const double along = uniform(rng, along_lo, along_hi);
  const double across = uniform(rng, lo, hi);
  const bool horizontal = o.direction == Direction::kLeft || o.direction == Direction::kRight;
  o.x0 = horizontal ? along : across;
  o.y0 = horizontal ? across : along;
}

bool overlaps(const SynthObject& a, const SynthObject& b, int frames) {
  for (int t = 0; t < frames; ++t) {
    const auto ca = a.center(t), cb = b.center(t);
    if (std::hypot(ca[0] - cb[0], ca[1] - cb[1]) < a.radius + b.radius + 1.0) return true;
  }
  return false;
}

std::vector<int> expression_for(const SynthVideo& v) {
  const auto& t = v.objects[v.target];
  if (v.event) {
    return {word_id("the"), word_id(to_string(t.shape)), word_id("that"), word_id("was"),
            word_id(to_string(t.color)), word_id("moving"), word_id(to_string(t.direction))};
  }
  return {word_id("the"), word_id(to_string(t.color)), word_id(to_string(t.shape)), word_id("moving"),
          word_id(to_string(t.direction))};
}

/// Whole-video uniqueness of (original color, shape, direction) for the target.
bool expression_unique(const SynthVideo& v) {
  const auto& t = v.objects[v.target];
  for (std::size_t i = 0; i < v.objects.size(); ++i) {
    if (i == v.target) continue;
    const auto& o = v.objects[i];
    if (o.color == t.color && o.shape == t.shape && o.direction == t.direction) return false;
  }
  return true;
}

bool try_sample(SynthVideo& v, std::mt19937_64& rng, double canvas, int frames, double speed) {
  v.objects.clear();
  SynthObject target;
  target.shape = pick<ShapeKind>(rng, 3);
  target.color = pick<ColorId>(rng, kVividColors);
  target.radius = uniform(rng, kMinRadius, kMaxRadius);
  target.direction = pick<Direction>(rng, 4);
  target.speed = speed;
  std::vector<SynthObject> others;
  if (v.event) {
    const int lo = frames / 4 + 1, hi = std::max(lo, (3 * frames) / 4);
    target.fade_frame = std::uniform_int_distribution<int>(lo, hi)(rng);
    SynthObject twin = target;
    twin.color = ColorId::kGray;
    twin.fade_frame = -1;
    twin.radius = uniform(rng, kMinRadius, kMaxRadius);
    do twin.direction = pick<Direction>(rng, 4);
    while (twin.direction == target.direction);
    others.push_back(twin);
  }
  const int extra = v.event ? 1 : std::uniform_int_distribution<int>(1, 2)(rng);
  for (int i = 0; i < extra; ++i) {
    SynthObject o;
    o.shape = pick<ShapeKind>(rng, 3);
    o.color = pick<ColorId>(rng, kVividColors + 1);
    o.radius = uniform(rng, kMinRadius, kMaxRadius);
    o.direction = pick<Direction>(rng, 4);
    o.speed = speed;
    if (o.shape == target.shape && (o.color == target.color || (v.event && o.color == ColorId::kGray))) return false;
    others.push_back(o);
  }
  place(target, rng, canvas, frames);
  for (auto& o : others) place(o, rng, canvas, frames);
  // Target last so it is never occluded.
  v.objects = others;
  v.objects.push_back(target);
  v.target = v.objects.size() - 1;
  v.event_frame = target.fade_frame;
  for (std::size_t i = 0; i < v.objects.size(); ++i)
    for (std::size_t j = i + 1; j < v.objects.size(); ++j)
      if (overlaps(v.objects[i], v.objects[j], frames)) return false;
  if (!expression_unique(v)) return false;
  if (!v.event) {
    for (int t = 0; t < frames; ++t)
      if (!frame_resolvable(v, t)) return false;
  }
  return true;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::string frame_name(const char* stem, std::size_t t, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%02zu.%s", stem, t, ext);
  return buf;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename E>
E parse_enum(const std::string& s, int n) {
  for (int i = 0; i < n; ++i)
    if (to_string(static_cast<E>(i)) == s) return static_cast<E>(i);
  throw IoError("unknown token '" + s + "' in metadata");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  return out;
}

std::vector<std::uint8_t> binary(const Tensor& m) {
  std::vector<std::uint8_t> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] > 0.5 ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> erode4(const std::vector<std::uint8_t>& m, std::size_t h, std::size_t w) {
  std::vector<std::uint8_t> out(m.size(), 0);
  auto at = [&](long y, long x) -> std::uint8_t {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0;
    return m[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x)
      out[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] =
          at(y, x) && at(y - 1, x) && at(y + 1, x) && at(y, x - 1) && at(y, x + 1);
  return out;
}

std::vector<std::uint8_t> dilate4(std::vector<std::uint8_t> m, std::size_t h, std::size_t w, std::size_t radius) {
  for (std::size_t r = 0; r < radius; ++r) {
    auto next = m;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        if (!m[y * w + x]) continue;
        if (y > 0) next[(y - 1) * w + x] = 1;
        if (y + 1 < h) next[(y + 1) * w + x] = 1;
        if (x > 0) next[y * w + x - 1] = 1;
        if (x + 1 < w) next[y * w + x + 1] = 1;
      }
    m = std::move(next);
  }
  return m;
}

std::vector<std::uint8_t> boundary(const std::vector<std::uint8_t>& m, std::size_t h, std::size_t w) {
  auto e = erode4(m, h, w);
  for (std::size_t i = 0; i < m.size(); ++i) e[i] = m[i] ^ e[i];
  return e;
}

std::pair<std::size_t, std::size_t> mask_extent(const Tensor& m) {
  if (m.shape().size() != 2) throw ShapeError("mask must be [H × W]");
  return {m.shape()[0], m.shape()[1]};
}

}  // namespace

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words{"the",    "that",    "was",   "moving", "red",    "green",
                                              "blue",   "yellow",  "magenta", "cyan", "gray",   "square",
                                              "circle", "triangle", "left",  "right",  "up",     "down"};
  return words;
}

int word_id(const std::string& word) {
  const auto& v = vocabulary();
  auto it = std::find(v.begin(), v.end(), word);
  if (it == v.end()) throw ContractError("word '" + word + "' not in vocabulary");
  return static_cast<int>(it - v.begin());
}

std::string render_words(const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocabulary().size()) throw ContractError("word id out of range");
    if (!out.empty()) out += ' ';
    out += vocabulary()[static_cast<std::size_t>(id)];
  }
  return out;
}

std::string to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "?";
}

std::string to_string(ColorId c) {
  static const char* names[] = {"red", "green", "blue", "yellow", "magenta", "cyan", "gray"};
  return names[static_cast<int>(c)];
}

std::string to_string(Direction d) {
  static const char* names[] = {"left", "right", "up", "down"};
  return names[static_cast<int>(d)];
}

std::array<double, 3> color_rgb(ColorId c) {
  static const std::array<std::array<int, 3>, 7> bytes{{{230, 40, 40},
                                                       {40, 200, 60},
                                                       {50, 80, 235},
                                                       {235, 220, 40},
                                                       {220, 50, 220},
                                                       {40, 220, 220},
                                                       {128, 128, 128}}};
  const auto& b = bytes[static_cast<std::size_t>(c)];
  return {b[0] / 255.0, b[1] / 255.0, b[2] / 255.0};
}

std::array<double, 2> SynthObject::center(int frame) const {
  const double d = speed * frame;
  switch (direction) {
    case Direction::kLeft: return {x0 - d, y0};
    case Direction::kRight: return {x0 + d, y0};
    case Direction::kUp: return {x0, y0 - d};
    case Direction::kDown: return {x0, y0 + d};
  }
  return {x0, y0};
}

ColorId SynthObject::color_at(int frame) const {
  return fade_frame >= 0 && frame >= fade_frame ? ColorId::kGray : color;
}

bool SynthObject::covers(int frame, double px, double py) const {
  const auto c = center(frame);
  const double dx = px - c[0], dy = py - c[1];
  switch (shape) {
    case ShapeKind::kSquare: return std::abs(dx) <= radius && std::abs(dy) <= radius;
    case ShapeKind::kCircle: return dx * dx + dy * dy <= radius * radius;
    case ShapeKind::kTriangle: return dy >= -radius && dy <= radius && std::abs(dx) <= (dy + radius) / 2.0;
  }
  return false;
}

void render_video(SynthVideo& video, std::size_t canvas, std::size_t frames) {
  video.frames.assign(frames, Tensor({canvas, canvas, 3}));
  video.masks.assign(frames, Tensor({canvas, canvas}));
  for (std::size_t t = 0; t < frames; ++t) {
    const int ti = static_cast<int>(t);
    for (std::size_t i = 0; i < video.objects.size(); ++i) {
      const auto& o = video.objects[i];
      const auto rgb = color_rgb(o.color_at(ti));
      for (std::size_t y = 0; y < canvas; ++y)
        for (std::size_t x = 0; x < canvas; ++x) {
          if (!o.covers(ti, x + 0.5, y + 0.5)) continue;
          for (std::size_t ch = 0; ch < 3; ++ch) video.frames[t][(y * canvas + x) * 3 + ch] = rgb[ch];
          if (i == video.target) video.masks[t].at(y, x) = 1.0;
        }
    }
  }
}

bool frame_resolvable(const SynthVideo& video, int frame) {
  const auto& t = video.objects.at(video.target);
  for (std::size_t i = 0; i < video.objects.size(); ++i) {
    if (i == video.target) continue;
    const auto& o = video.objects[i];
    if (o.shape == t.shape && o.color_at(frame) == t.color_at(frame)) return false;
  }
  return true;
}

SynthDataset generate_dataset(const SynthOptions& opts) {
  if (opts.count == 0) throw ContractError("dataset count must be at least 1");
  if (!(opts.event_mix >= 0.0 && opts.event_mix <= 1.0)) throw ContractError("event mix must lie in [0, 1]");
  if (opts.frames == 0) throw ContractError("videos need at least one frame");
  const double room = static_cast<double>(opts.canvas) - 2.0 * kMaxRadius - 2.0;
  if (room <= 0.0) throw ContractError("canvas too small for the shape sizes");
  const double speed = opts.frames > 1 ? std::min(1.0, room / static_cast<double>(opts.frames - 1)) : 0.0;

  SynthDataset ds;
  ds.canvas = opts.canvas;
  ds.frames_per_video = opts.frames;
  for (std::size_t i = 0; i < opts.count; ++i) {
    SynthVideo v;
    char id[32];
    std::snprintf(id, sizeof id, "video_%04zu", i);
    v.id = id;
    v.seed = video_seed(opts.seed, i);
    std::mt19937_64 rng(v.seed);
    v.event = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < opts.event_mix;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
      ok = try_sample(v, rng, static_cast<double>(opts.canvas), static_cast<int>(opts.frames), speed);
    }
    if (!ok) throw ContractError("could not draw an unambiguous scene for " + v.id);
    v.words = expression_for(v);
    render_video(v, opts.canvas, opts.frames);
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

void write_ppm(const std::string& path, const Tensor& rgb) {
  if (rgb.shape().size() != 3 || rgb.shape()[2] != 3) throw ShapeError("PPM needs [H × W × 3]");
  std::ofstream out(path, std::ios::binary);
  out << "P6\n" << rgb.shape()[1] << ' ' << rgb.shape()[0] << "\n255\n";
  for (double v : rgb.data()) out.put(static_cast<char>(to_byte(v)));
  if (!out) throw IoError("cannot write " + path);
}

void write_pgm(const std::string& path, const Tensor& gray) {
  const auto [h, w] = mask_extent(gray);
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << w << ' ' << h << "\n255\n";
  for (double v : gray.data()) out.put(static_cast<char>(to_byte(v)));
  if (!out) throw IoError("cannot write " + path);
}

namespace {

Tensor read_netpbm(const std::string& path, const char* magic, std::size_t channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string m;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> m >> w >> h >> maxval;
  if (m != magic || maxval != 255 || w == 0 || h == 0) throw IoError(path + " is not an 8-bit " + magic + " file");
  in.get();
  std::vector<char> bytes(w * h * channels);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError(path + " is truncated");
  Shape shape = channels == 1 ? Shape{h, w} : Shape{h, w, channels};
  Tensor t(shape);
  for (std::size_t i = 0; i < bytes.size(); ++i) t[i] = static_cast<std::uint8_t>(bytes[i]) / 255.0;
  return t;
}

}  // namespace

Tensor read_ppm(const std::string& path) { return read_netpbm(path, "P6", 3); }
Tensor read_pgm(const std::string& path) { return read_netpbm(path, "P5", 1); }

void save_dataset(const SynthDataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  std::ofstream meta(fs::path(dir) / "metadata.txt");
  if (!meta) throw IoError("cannot write metadata in " + dir);
  meta << "# canvas=" << ds.canvas << " frames=" << ds.frames_per_video << '\n';
  for (const auto& v : ds.videos) {
    meta << v.id << " seed=" << v.seed << " target=" << v.target << " event=" << (v.event ? 1 : 0)
         << " event_frame=" << v.event_frame << " words=";
    for (std::size_t i = 0; i < v.words.size(); ++i) meta << (i ? "," : "") << v.words[i];
    meta << " objects=";
    for (std::size_t i = 0; i < v.objects.size(); ++i) {
      const auto& o = v.objects[i];
      meta << (i ? ";" : "") << to_string(o.shape) << ':' << to_string(o.color) << ':' << fmt_double(o.radius) << ':'
           << fmt_double(o.x0) << ':' << fmt_double(o.y0) << ':' << to_string(o.direction) << ':'
           << fmt_double(o.speed) << ':' << o.fade_frame;
    }
    meta << '\n';
    const fs::path vdir = fs::path(dir) / v.id;
    fs::create_directories(vdir, ec);
    if (ec) throw IoError("cannot create " + vdir.string());
    for (std::size_t t = 0; t < v.frames.size(); ++t) {
      write_ppm((vdir / frame_name("frame", t, "ppm")).string(), v.frames[t]);
      write_pgm((vdir / frame_name("mask", t, "pgm")).string(), v.masks[t]);
    }
  }
  if (!meta) throw IoError("short write of metadata in " + dir);
}

SynthDataset load_dataset(const std::string& dir) {
  std::ifstream meta(fs::path(dir) / "metadata.txt");
  if (!meta) throw IoError("no metadata.txt in " + dir);
  SynthDataset ds;
  std::string line;
  if (!std::getline(meta, line) || std::sscanf(line.c_str(), "# canvas=%zu frames=%zu", &ds.canvas,
                                               &ds.frames_per_video) != 2) {
    throw IoError("bad metadata header in " + dir);
  }
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    SynthVideo v;
    ss >> v.id;
    for (std::string field; ss >> field;) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw IoError("bad metadata field '" + field + "'");
      const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
      if (key == "seed") {
        v.seed = std::stoull(value);
      } else if (key == "target") {
        v.target = std::stoul(value);
      } else if (key == "event") {
        v.event = value == "1";
      } else if (key == "event_frame") {
        v.event_frame = std::stoi(value);
      } else if (key == "words") {
        for (const auto& w : split(value, ',')) v.words.push_back(std::stoi(w));
      } else if (key == "objects") {
        for (const auto& rec : split(value, ';')) {
          const auto p = split(rec, ':');
          if (p.size() != 8) throw IoError("bad object record '" + rec + "'");
          SynthObject o;
          o.shape = parse_enum<ShapeKind>(p[0], 3);
          o.color = parse_enum<ColorId>(p[1], kVividColors + 1);
          o.radius = std::stod(p[2]);
          o.x0 = std::stod(p[3]);
          o.y0 = std::stod(p[4]);
          o.direction = parse_enum<Direction>(p[5], 4);
          o.speed = std::stod(p[6]);
          o.fade_frame = std::stoi(p[7]);
          v.objects.push_back(o);
        }
      } else {
        throw IoError("unknown metadata key '" + key + "'");
      }
    }
    const fs::path vdir = fs::path(dir) / v.id;
    for (std::size_t t = 0; t < ds.frames_per_video; ++t) {
      v.frames.push_back(read_ppm((vdir / frame_name("frame", t, "ppm")).string()));
      v.masks.push_back(read_pgm((vdir / frame_name("mask", t, "pgm")).string()));
    }
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

double j_metric(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) throw ShapeError("J needs masks of equal shape");
  const auto p = binary(pred), g = binary(gt);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] & g[i];
    uni += p[i] | g[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::size_t default_boundary_tolerance(std::size_t height, std::size_t width) {
  const double diag = std::hypot(static_cast<double>(height), static_cast<double>(width));
  return static_cast<std::size_t>(std::ceil(0.008 * diag));
}

double f_metric(const Tensor& pred, const Tensor& gt, std::size_t tol) {
  if (pred.shape() != gt.shape()) throw ShapeError("F needs masks of equal shape");
  const auto [h, w] = mask_extent(gt);
  const auto bp = boundary(binary(pred), h, w), bg = boundary(binary(gt), h, w);
  const auto np = std::count(bp.begin(), bp.end(), 1), ng = std::count(bg.begin(), bg.end(), 1);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const auto dp = dilate4(bp, h, w, tol), dg = dilate4(bg, h, w, tol);
  std::size_t hit_p = 0, hit_g = 0;
  for (std::size_t i = 0; i < bp.size(); ++i) {
    hit_p += bp[i] & dg[i];
    hit_g += bg[i] & dp[i];
  }
  const double precision = static_cast<double>(hit_p) / static_cast<double>(np);
  const double recall = static_cast<double>(hit_g) / static_cast<double>(ng);
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

EvalReport evaluate_dataset(const Predictor& predict, const SynthDataset& ds) {
  EvalReport r;
  for (const auto& v : ds.videos) {
    const auto probs = predict(v);
    if (probs.size() != v.masks.size()) throw ContractError("predictor returned the wrong frame count for " + v.id);
    VideoScore s{v.id, v.event, 0.0, 0.0, 0.0};
    for (std::size_t t = 0; t < probs.size(); ++t) {
      const auto [h, w] = mask_extent(v.masks[t]);
      s.j += j_metric(probs[t], v.masks[t]);
      s.f += f_metric(probs[t], v.masks[t], default_boundary_tolerance(h, w));
    }
    s.j /= static_cast<double>(probs.size());
    s.f /= static_cast<double>(probs.size());
    s.jf = (s.j + s.f) / 2.0;
    r.videos.push_back(s);
  }
  for (const auto& s : r.videos) {
    r.j += s.j;
    r.f += s.f;
    if (s.event) {
      ++r.event_count;
      r.event_j += s.j;
      r.event_f += s.f;
    }
  }
  const double n = static_cast<double>(r.videos.size());
  if (n > 0) {
    r.j /= n;
    r.f /= n;
  }
  if (r.event_count > 0) {
    r.event_j /= static_cast<double>(r.event_count);
    r.event_f /= static_cast<double>(r.event_count);
  }
  r.jf = (r.j + r.f) / 2.0;
  r.event_jf = (r.event_j + r.event_f) / 2.0;
  return r;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  char buf[160];
  for (const auto& s : r.videos) {
    std::snprintf(buf, sizeof buf, "video %s event=%d J=%.4f F=%.4f J&F=%.4f\n", s.id.c_str(), s.event ? 1 : 0, s.j,
                  s.f, s.jf);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "mean videos=%zu J=%.4f F=%.4f J&F=%.4f\n", r.videos.size(), r.j, r.f, r.jf);
  out << buf;
  std::snprintf(buf, sizeof buf, "event videos=%zu J=%.4f F=%.4f J&F=%.4f\n", r.event_count, r.event_j, r.event_f,
                r.event_jf);
  out << buf;
  return out.str();
}

}  // namespace vlprvos
