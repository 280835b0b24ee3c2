// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/nn.hpp"

#include <cmath>

#include "vlprvos/errors.hpp"

namespace vlprvos {

Parameter& ParameterStore::add(const std::string& name, Tensor value, bool frozen) {
  if (params_.count(name)) throw ContractError("duplicate parameter " + name);
  auto& p = params_[name];
  p.name = name;
  p.value = std::move(value);
  p.frozen = frozen;
  return p;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter " + name);
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter " + name);
  return it->second;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_)
    if (!p.frozen) n += p.value.size();
  return n;
}

std::size_t ParameterStore::frozen_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_)
    if (p.frozen) n += p.value.size();
  return n;
}

std::vector<std::string> ParameterStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_)
    if (!p.frozen) out.push_back(name);
  return out;
}

void ParameterStore::set_frozen_prefix(const std::string& prefix, bool frozen) {
  for (auto& [name, p] : params_)
    if (name.rfind(prefix, 0) == 0) p.frozen = frozen;
}

ad::Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Parameter& p = store_->at(name);
  auto v = ad::leaf(p.value, track_ && !p.frozen);
  bound_.emplace(name, v);
  return v;
}

GradMap Binder::grads() const {
  GradMap out;
  for (const auto& [name, p] : store_->all()) {
    if (p.frozen) continue;
    auto it = bound_.find(name);
    if (it != bound_.end() && it->second.grad().size() == p.value.size()) {
      out[name] = it->second.grad();
    } else {
      out[name] = Tensor(p.value.shape());
    }
  }
  return out;
}

void register_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, bool bias,
                     bool frozen, std::mt19937_64& rng) {
  store.add(prefix + ".w", Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in))), frozen);
  if (bias) store.add(prefix + ".b", Tensor({out}), frozen);
}

void register_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t dim, bool frozen) {
  store.add(prefix + ".gamma", Tensor({dim}, 1.0), frozen);
  store.add(prefix + ".beta", Tensor({dim}), frozen);
}

void register_ffn(ParameterStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden, bool frozen,
                  std::mt19937_64& rng) {
  store.add(prefix + ".w1", Tensor::randn({dim, hidden}, rng, 1.0 / std::sqrt(static_cast<double>(dim))), frozen);
  store.add(prefix + ".b1", Tensor({hidden}), frozen);
  store.add(prefix + ".w2", Tensor::randn({hidden, dim}, rng, 1.0 / std::sqrt(static_cast<double>(hidden))), frozen);
  store.add(prefix + ".b2", Tensor({dim}), frozen);
}

void register_attention(ParameterStore& store, const std::string& prefix, std::size_t dim, bool frozen,
                        std::mt19937_64& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  for (const char* m : {".q", ".k", ".v", ".o"}) store.add(prefix + m, Tensor::randn({dim, dim}, rng, s), frozen);
}

LinearWeights bind_linear(Binder& b, const std::string& prefix) {
  LinearWeights w{b(prefix + ".w"), {}};
  if (b.store().contains(prefix + ".b")) w.b = b(prefix + ".b");
  return w;
}

LayerNormWeights bind_layer_norm(Binder& b, const std::string& prefix) {
  return {b(prefix + ".gamma"), b(prefix + ".beta")};
}

FfnWeights bind_ffn(Binder& b, const std::string& prefix) {
  return {b(prefix + ".w1"), b(prefix + ".b1"), b(prefix + ".w2"), b(prefix + ".b2")};
}

AttentionParams bind_attention(Binder& b, const std::string& prefix, std::size_t head_count) {
  AttentionParams p{b(prefix + ".q"), b(prefix + ".k"), b(prefix + ".v"), b(prefix + ".o"), head_count};
  if (head_count == 0 || p.model_dim() % head_count != 0) {
    throw ShapeError("model dim " + std::to_string(p.model_dim()) + " not divisible by " + std::to_string(head_count) +
                     " heads");
  }
  return p;
}

ad::Var linear(const ad::Var& x, const LinearWeights& w) {
  auto y = ad::matmul(x, w.w);
  return w.b.defined() ? ad::add_rowvec(y, w.b) : y;
}

ad::Var layer_norm(const ad::Var& x, const LayerNormWeights& w, double eps) {
  return ad::layer_norm(x, w.gamma, w.beta, eps);
}

ad::Var ffn_apply(const ad::Var& x, const FfnWeights& w) {
  if (x.value().cols() != w.w1.value().rows() || w.w1.value().cols() != w.w2.value().rows()) {
    throw ShapeError("ffn widths do not chain: x " + shape_str(x.shape()) + ", w1 " + shape_str(w.w1.shape()) +
                     ", w2 " + shape_str(w.w2.shape()));
  }
  auto h = ad::gelu(ad::add_rowvec(ad::matmul(x, w.w1), w.b1));
  return ad::add_rowvec(ad::matmul(h, w.w2), w.b2);
}

ad::Var multi_head_attention(const ad::Var& query_src, const ad::Var& kv_src, const AttentionParams& params,
                             const BoolMatrix* mask) {
  const std::size_t d = params.model_dim();
  if (query_src.value().cols() != d || kv_src.value().cols() != d) {
    throw ShapeError("attention width: query " + shape_str(query_src.shape()) + ", kv " + shape_str(kv_src.shape()) +
                     ", model dim " + std::to_string(d));
  }
  if (params.head_count == 0 || d % params.head_count != 0) throw ShapeError("model dim not divisible by heads");
  const std::size_t nq = query_src.value().rows(), nkv = kv_src.value().rows();
  if (mask && (mask->rows != nq || mask->cols != nkv)) throw ShapeError("attention mask extent");

  const std::size_t dh = d / params.head_count;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto q = ad::matmul(query_src, params.q_map);
  auto k = ad::matmul(kv_src, params.k_map);
  auto v = ad::matmul(kv_src, params.v_map);

  std::vector<ad::Var> heads;
  heads.reserve(params.head_count);
  for (std::size_t h = 0; h < params.head_count; ++h) {
    auto qh = params.head_count == 1 ? q : ad::slice_cols(q, h * dh, dh);
    auto kh = params.head_count == 1 ? k : ad::slice_cols(k, h * dh, dh);
    auto vh = params.head_count == 1 ? v : ad::slice_cols(v, h * dh, dh);
    auto probs = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), scale), mask);
    heads.push_back(ad::matmul(probs, vh));
  }
  auto merged = params.head_count == 1 ? heads.front() : ad::concat_cols(heads);
  return ad::matmul(merged, params.out_map);
}

}  // namespace vlprvos
