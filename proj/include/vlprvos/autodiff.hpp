// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "vlprvos/tensor.hpp"

namespace vlprvos {

/// Row-major boolean matrix; attention masks and allowed-pair relations.
struct BoolMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  BoolMatrix() = default;
  BoolMatrix(std::size_t r, std::size_t c, bool v = false) : rows(r), cols(c), bits(r * c, v ? 1 : 0) {}

  bool operator()(std::size_t r, std::size_t c) const { return bits[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { bits[r * cols + c] = v ? 1 : 0; }
  std::size_t row_count(std::size_t r) const;
  friend bool operator==(const BoolMatrix&, const BoolMatrix&) = default;
};

namespace ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialized on first touch.
  Tensor& grad_buffer();
};

/// Handle to a value in the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad);

/// Reverse sweep from a scalar; gradients accumulate into every reachable node that requires them.
void backward(const Var& loss);

// Matrix products on [rows × cols] views.
Var matmul(const Var& a, const Var& b);     // a[n×k] · b[k×m]
Var matmul_nt(const Var& a, const Var& b);  // a[n×k] · b[m×k]ᵀ

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_rowvec(const Var& a, const Var& v);  // a[n×d] + v[d] per row
Var mul_rowvec(const Var& a, const Var& v);  // a[n×d] ⊙ v[d] per row

Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
Var reshape(const Var& a, Shape shape);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);
Var gelu(const Var& x);
Var sigmoid(const Var& x);
Var sum(const Var& x);

/// Row softmax; masked-out entries get probability 0. Throws DegenerateMaskError on an empty row.
Var softmax_rows(const Var& x, const BoolMatrix* mask);

/// s_i = <f_i, x> / (|f_i| |x| + eps) for every row f_i.
Var cosine_rows(const Var& f, const Var& x, double eps);

/// Σ_i w_i f_i / (Σ_i w_i + eps) with w[N], f[N×C] → [C].
Var masked_pool(const Var& w, const Var& f, double eps);

/// 1 - (2Σpy + s) / (Σp + Σy + s).
Var dice_loss(const Var& pred, const Tensor& target, double smooth);

/// Mean of -α_t (1-p_t)^γ log p_t with p clamped to [clamp, 1-clamp].
Var focal_loss(const Var& pred, const Tensor& target, double gamma, double alpha, double clamp);

/// Multiply-accumulate tally of every forward matmul executed on this thread while alive.
/// Nested counters forward their tally to the enclosing one on destruction.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  std::uint64_t count() const { return count_; }
  void add(std::uint64_t macs) { count_ += macs; }

 private:
  std::uint64_t count_ = 0;
  MacCounter* previous_;
};

namespace detail {
// Raw kernels, accumulate into c.
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
}  // namespace detail

}  // namespace ad
}  // namespace vlprvos
