// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "vlprvos/autodiff.hpp"
#include "vlprvos/tensor.hpp"

namespace vlprvos {

struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;
};

using GradMap = std::map<std::string, Tensor>;

/// Named parameters, iterated in name order.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor value, bool frozen);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  const std::map<std::string, Parameter>& all() const { return params_; }
  std::map<std::string, Parameter>& all() { return params_; }

  std::size_t trainable_count() const;
  std::size_t frozen_count() const;
  std::vector<std::string> trainable_names() const;

  /// Sets the frozen flag on every parameter whose name starts with prefix.
  void set_frozen_prefix(const std::string& prefix, bool frozen);

 private:
  std::map<std::string, Parameter> params_;
};

/// Binds parameters to graph leaves for one forward pass. Each name maps to a single leaf,
/// so a parameter used in several places (weight reuse) accumulates all its gradients.
class Binder {
 public:
  /// With track_grads false every parameter binds as a constant (inference, no tape).
  explicit Binder(const ParameterStore& store, bool track_grads = true) : store_(&store), track_(track_grads) {}

  ad::Var operator()(const std::string& name);
  const ParameterStore& store() const { return *store_; }

  /// Gradients of every trainable parameter touched during the pass; untouched ones get zeros.
  GradMap grads() const;

 private:
  const ParameterStore* store_;
  bool track_;
  std::map<std::string, ad::Var> bound_;
};

struct LinearWeights {
  ad::Var w;  // [in × out]
  ad::Var b;  // [out], may be undefined
};

struct LayerNormWeights {
  ad::Var gamma;
  ad::Var beta;
};

struct FfnWeights {
  ad::Var w1, b1, w2, b2;
};

/// Bias-free q/k/v/out maps of width model-dim. One value may serve self- and cross-attention.
struct AttentionParams {
  ad::Var q_map, k_map, v_map, out_map;
  std::size_t head_count = 1;

  std::size_t model_dim() const { return q_map.value().rows(); }
};

inline constexpr double kLayerNormEps = 1e-5;

// Registration helpers; names are prefix + ".w" etc.
void register_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, bool bias,
                     bool frozen, std::mt19937_64& rng);
void register_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t dim, bool frozen);
void register_ffn(ParameterStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden, bool frozen,
                  std::mt19937_64& rng);
void register_attention(ParameterStore& store, const std::string& prefix, std::size_t dim, bool frozen,
                        std::mt19937_64& rng);

LinearWeights bind_linear(Binder& b, const std::string& prefix);
LayerNormWeights bind_layer_norm(Binder& b, const std::string& prefix);
FfnWeights bind_ffn(Binder& b, const std::string& prefix);
AttentionParams bind_attention(Binder& b, const std::string& prefix, std::size_t head_count);

ad::Var linear(const ad::Var& x, const LinearWeights& w);
ad::Var layer_norm(const ad::Var& x, const LayerNormWeights& w, double eps = kLayerNormEps);

/// w2 · gelu(w1 · x + b1) + b2 applied row-wise.
ad::Var ffn_apply(const ad::Var& x, const FfnWeights& w);

/// Per-head scaled dot-product attention, scale 1/sqrt(d/heads). Self-attention when
/// query_src and kv_src coincide; cross-attention otherwise.
ad::Var multi_head_attention(const ad::Var& query_src, const ad::Var& kv_src, const AttentionParams& params,
                             const BoolMatrix* mask = nullptr);

}  // namespace vlprvos
