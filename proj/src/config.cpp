// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <variant>
#include <vector>

#include "vlprvos/errors.hpp"

namespace vlprvos {

std::string to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::kCfMsa: return "cfmsa";
    case AttentionVariant::kGlobal: return "global";
    case AttentionVariant::kW3d: return "w3d";
    case AttentionVariant::kNone: return "none";
  }
  return "?";
}

AttentionVariant parse_attention_variant(const std::string& s) {
  if (s == "cfmsa") return AttentionVariant::kCfMsa;
  if (s == "global") return AttentionVariant::kGlobal;
  if (s == "w3d") return AttentionVariant::kW3d;
  if (s == "none") return AttentionVariant::kNone;
  throw ConfigError("unknown attention variant '" + s + "'");
}

AblationFlags table_variant(int row) {
  if (row < 1 || row > 10) throw ConfigError("ablation presets are variant-1 to variant-10, got " + std::to_string(row));
  AblationFlags f;
  f.lp_vp = row >= 2;
  f.temporal = f.prtc = row >= 3;
  f.history = row >= 4;
  f.stage1 = row == 5 || row >= 7;
  f.stage2 = row >= 6;
  f.stage3 = true;
  switch (row) {
    case 8: f.attention = AttentionVariant::kCfMsa; break;
    case 9: f.attention = AttentionVariant::kGlobal; break;
    case 10: f.attention = AttentionVariant::kW3d; break;
    default: f.attention = AttentionVariant::kNone; break;
  }
  return f;
}

AblationFlags apply_ablation(AblationFlags base, const std::string& flags) {
  std::optional<AttentionVariant> attn;
  std::optional<int> preset;
  std::vector<std::string> toggles;
  std::stringstream ss(flags);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    if (tok == "no-temporal") tok = "variant-2";
    if (tok.rfind("variant-", 0) == 0) {
      int row = 0;
      const auto* first = tok.data() + 8;
      if (std::from_chars(first, tok.data() + tok.size(), row).ec != std::errc{}) {
        throw ConfigError("bad preset '" + tok + "'");
      }
      if (preset && *preset != row) throw ConfigError("two ablation presets requested");
      preset = row;
    } else if (tok.rfind("attn=", 0) == 0) {
      auto v = parse_attention_variant(tok.substr(5));
      if (attn && *attn != v) throw ConfigError("two attention variants requested");
      attn = v;
    } else {
      toggles.push_back(tok);
    }
  }
  if (preset) base = table_variant(*preset);
  for (const auto& t : toggles) {
    if (t == "no-lp-vp") base.lp_vp = false;
    else if (t == "no-tp") base.temporal = base.prtc = false;
    else if (t == "no-prtc") base.prtc = false;
    else if (t == "no-hp") base.history = false;
    else if (t == "no-stage1") base.stage1 = false;
    else if (t == "no-stage2") base.stage2 = false;
    else if (t == "no-stage3") base.stage3 = false;
    else throw ConfigError("unknown ablation flag '" + t + "'");
  }
  if (attn) base.attention = *attn;
  if (base.prtc && !base.temporal) throw ConfigError("prtc needs temporal prompts");
  return base;
}

std::string describe_wiring(const AblationFlags& f) {
  std::string s;
  auto put = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ' ';
    s += name;
  };
  put(f.lp_vp, "lp+vp");
  put(f.temporal, "tp");
  put(f.prtc, "prtc");
  put(f.history, "hp");
  put(f.stage1, "stage1");
  put(f.stage2, "stage2");
  put(f.stage3, "stage3");
  put(f.attention != AttentionVariant::kNone, ("attn:" + to_string(f.attention)).c_str());
  return s;
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(patch_size > 0 && image_size % patch_size == 0, "image_size must be a multiple of patch_size");
  need(vision_heads > 0 && vision_dim % vision_heads == 0, "vision dim not divisible by heads");
  need(language_heads > 0 && language_dim % language_heads == 0, "language dim not divisible by heads");
  need(fusion_heads > 0 && fusion_dim % fusion_heads == 0, "fusion dim not divisible by heads");
  need(vision_layers >= 1 && language_layers >= 1, "encoders need at least one layer");
  need(clip_len >= 1, "clip_len must be >= 1");
  need(cube_size >= 1 && cube_size <= grid_side(), "cube size must lie in [1, grid side]");
  need(vocab_size >= 1 && max_words >= 1, "vocabulary and max_words must be positive");
  need(ablation.temporal || !ablation.prtc, "prtc needs temporal prompts");
  need(optimizer.lr > 0.0, "learning rate must be positive");
}

ModelConfig toy_config() { return ModelConfig{}; }

ModelConfig full_scale_config() {
  ModelConfig c;
  c.image_size = 352;
  c.patch_size = 16;
  c.vision_layers = 12;
  c.vision_dim = 768;
  c.vision_heads = 12;
  c.language_layers = 12;
  c.language_dim = 512;
  c.language_heads = 8;
  c.vocab_size = 49408;
  c.max_words = 75;
  c.fusion_dim = 256;
  c.fusion_heads = 8;
  c.cube_size = 11;
  return c;
}

namespace {

using FieldRef = std::variant<std::size_t*, double*, bool*, AttentionVariant*>;

struct Field {
  const char* section;
  const char* key;
  FieldRef ref;
};

std::vector<Field> fields(ModelConfig& c) {
  return {
      {"vision", "image_size", &c.image_size},
      {"vision", "patch_size", &c.patch_size},
      {"vision", "channels", &c.channels},
      {"vision", "layers", &c.vision_layers},
      {"vision", "dim", &c.vision_dim},
      {"vision", "heads", &c.vision_heads},
      {"vision", "ffn_ratio", &c.ffn_ratio},
      {"language", "layers", &c.language_layers},
      {"language", "dim", &c.language_dim},
      {"language", "heads", &c.language_heads},
      {"language", "vocab_size", &c.vocab_size},
      {"language", "max_words", &c.max_words},
      {"prompts", "vision", &c.vision_prompts},
      {"prompts", "temporal", &c.temporal_prompts},
      {"prompts", "language", &c.language_prompts},
      {"fusion", "dim", &c.fusion_dim},
      {"fusion", "heads", &c.fusion_heads},
      {"fusion", "str_depth", &c.str_depth},
      {"fusion", "cube_size", &c.cube_size},
      {"fusion", "alpha_init", &c.alpha_init},
      {"train", "clip_len", &c.clip_len},
      {"train", "w_dice", &c.w_dice},
      {"train", "w_focal", &c.w_focal},
      {"train", "focal_gamma", &c.focal_gamma},
      {"train", "focal_alpha", &c.focal_alpha},
      {"train", "lr", &c.optimizer.lr},
      {"train", "weight_decay", &c.optimizer.weight_decay},
      {"train", "beta1", &c.optimizer.beta1},
      {"train", "beta2", &c.optimizer.beta2},
      {"train", "adam_eps", &c.optimizer.eps},
      {"train", "teacher_forcing", &c.teacher_forcing},
      {"train", "seed", &c.seed},
      {"ablation", "lp_vp", &c.ablation.lp_vp},
      {"ablation", "temporal", &c.ablation.temporal},
      {"ablation", "prtc", &c.ablation.prtc},
      {"ablation", "history", &c.ablation.history},
      {"ablation", "stage1", &c.ablation.stage1},
      {"ablation", "stage2", &c.ablation.stage2},
      {"ablation", "stage3", &c.ablation.stage3},
      {"ablation", "attention", &c.ablation.attention},
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v, const std::string& where) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("bad number '" + v + "' for " + where);
  return out;
}

void assign(FieldRef ref, const std::string& v, const std::string& where) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (v == "true") *p = true;
          else if (v == "false") *p = false;
          else throw ConfigError("expected true/false for " + where);
        } else if constexpr (std::is_same_v<T, AttentionVariant>) {
          *p = parse_attention_variant(v);
        } else if constexpr (std::is_same_v<T, double>) {
          // from_chars for double is unavailable on older toolchains
          std::size_t used = 0;
          double d = 0.0;
          try {
            d = std::stod(v, &used);
          } catch (const std::exception&) {
            throw ConfigError("bad number '" + v + "' for " + where);
          }
          if (used != v.size()) throw ConfigError("bad number '" + v + "' for " + where);
          *p = d;
        } else {
          *p = parse_number<T>(v, where);
        }
      },
      ref);
}

std::string render(FieldRef ref) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, AttentionVariant>) {
          return to_string(*p);
        } else if constexpr (std::is_same_v<T, double>) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.17g", *p);
          return buf;
        } else {
          return std::to_string(*p);
        }
      },
      ref);
}

}  // namespace

ModelConfig parse_config(const std::string& text) {
  ModelConfig cfg;
  auto table = fields(cfg);
  std::map<std::pair<std::string, std::string>, FieldRef> lookup;
  for (const auto& f : table) lookup.emplace(std::pair{std::string(f.section), std::string(f.key)}, f.ref);

  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header at " + where);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value at " + where);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = lookup.find({section, key});
    if (it == lookup.end()) throw ConfigError("unknown key '" + section + "." + key + "' at " + where);
    assign(it->second, value, section + "." + key);
  }
  cfg.validate();
  return cfg;
}

std::string serialize_config(const ModelConfig& cfg) {
  ModelConfig copy = cfg;
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields(copy)) {
    if (section != f.section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << render(f.ref) << '\n';
  }
  return out.str();
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace vlprvos
