// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#include "vlprvos/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "vlprvos/errors.hpp"

namespace vlprvos {

std::size_t BoolMatrix::row_count(std::size_t r) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < cols; ++c) n += bits[r * cols + c];
  return n;
}

namespace ad {

namespace {

thread_local MacCounter* active_counter = nullptr;

void count_macs(std::uint64_t macs) {
  if (active_counter) active_counter->add(macs);
}

}  // namespace

MacCounter::MacCounter() : previous_(active_counter) { active_counter = this; }

MacCounter::~MacCounter() {
  active_counter = previous_;
  if (previous_) previous_->add(count_);
}

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

namespace {

using Backward = std::function<void(Node&)>;

Var make_result(Tensor value, std::vector<Var> parents, Backward fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.shared());
    n->backward = std::move(fn);
  }
  return Var(std::move(n));
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

void backward(const Var& loss) {
  if (loss.value().size() != 1) throw ShapeError("backward() needs a scalar loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
  }
}

namespace detail {

void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  // Each c[i][j] still sums its k products in order from zero, then lands on c; running the m
  // sums side by side over a transposed b lets the inner loop vectorize.
  thread_local std::vector<double> bt, acc;
  bt.resize(k * m);
  acc.resize(m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * m + j] = b[j * k + p];
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = bt.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) acc[j] += aip * brow[j];
    }
    double* crow = c + i * m;
    for (std::size_t j = 0; j < m; ++j) crow[j] += acc[j];
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * n;
    const double* brow = b + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double api = arow[i];
      if (api == 0.0) continue;
      double* crow = c + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += api * brow[j];
    }
  }
}

}  // namespace detail

Var matmul(const Var& a, const Var& b) {
  const std::size_t n = a.value().rows(), k = a.value().cols();
  if (b.value().rank() > 2 || b.value().rows() != k) {
    throw ShapeError("matmul " + shape_str(a.shape()) + " · " + shape_str(b.shape()));
  }
  const std::size_t m = b.value().cols();
  count_macs(static_cast<std::uint64_t>(n) * k * m);
  Tensor out({n, m});
  detail::gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), n, k, m);
  return make_result(std::move(out), {a, b}, [n, k, m](Node& self) {
    const double* g = self.grad.data().data();
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    if (pa->requires_grad) detail::gemm_nt(g, pb->value.data().data(), pa->grad_buffer().data().data(), n, m, k);
    if (pb->requires_grad) detail::gemm_tn(pa->value.data().data(), g, pb->grad_buffer().data().data(), k, n, m);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const std::size_t n = a.value().rows(), k = a.value().cols();
  if (b.value().cols() != k) throw ShapeError("matmul_nt " + shape_str(a.shape()) + " · " + shape_str(b.shape()) + "ᵀ");
  const std::size_t m = b.value().rows();
  count_macs(static_cast<std::uint64_t>(n) * k * m);
  Tensor out({n, m});
  detail::gemm_nt(a.value().data().data(), b.value().data().data(), out.data().data(), n, k, m);
  return make_result(std::move(out), {a, b}, [n, k, m](Node& self) {
    const double* g = self.grad.data().data();
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    if (pa->requires_grad) detail::gemm_nn(g, pb->value.data().data(), pa->grad_buffer().data().data(), n, m, k);
    if (pb->requires_grad) detail::gemm_tn(g, pa->value.data().data(), pb->grad_buffer().data().data(), m, n, k);
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      Tensor& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    if (pa->requires_grad) {
      Tensor& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      Tensor& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v *= s;
  return make_result(std::move(out), {a}, [s](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_rowvec(const Var& a, const Var& v) {
  const std::size_t n = a.value().rows(), d = a.value().cols();
  if (v.value().size() != d) throw ShapeError("add_rowvec width " + std::to_string(d) + " vs " + shape_str(v.shape()));
  Tensor out = a.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += v.value()[c];
  return make_result(std::move(out), {a, v}, [n, d](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c];
    }
  });
}

Var mul_rowvec(const Var& a, const Var& v) {
  const std::size_t n = a.value().rows(), d = a.value().cols();
  if (v.value().size() != d) throw ShapeError("mul_rowvec width " + std::to_string(d) + " vs " + shape_str(v.shape()));
  Tensor out = a.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] *= v.value()[c];
  return make_result(std::move(out), {a, v}, [n, d](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pv = self.parents[1].get();
    if (pa->requires_grad) {
      Tensor& g = pa->grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) g[r * d + c] += self.grad[r * d + c] * pv->value[c];
    }
    if (pv->requires_grad) {
      Tensor& g = pv->grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c] * pa->value[r * d + c];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t d = parts.front().value().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != d) throw ShapeError("concat_rows width mismatch");
    total += p.value().rows();
  }
  Tensor out({total, d});
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().vec().begin(), p.value().vec().end(), out.vec().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
  }
  return make_result(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node* p = self.parents[k].get();
      if (!p->requires_grad) continue;
      Tensor& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  const std::size_t d = a.value().cols();
  if (begin + count > a.value().rows()) throw ShapeError("slice_rows out of range");
  Tensor out({count, d});
  std::copy_n(a.value().vec().begin() + static_cast<std::ptrdiff_t>(begin * d), count * d, out.vec().begin());
  return make_result(std::move(out), {a}, [begin, d](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * d + i] += self.grad[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t n = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != n) throw ShapeError("concat_cols row mismatch");
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({n, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + off + c] = v[r * widths[k] + c];
    off += widths[k];
  }
  return make_result(std::move(out), parts, [n, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node* p = self.parents[k].get();
      if (p->requires_grad) {
        Tensor& g = p->grad_buffer();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) g[r * widths[k] + c] += self.grad[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  const std::size_t n = a.value().rows(), d = a.value().cols();
  if (begin + count > d) throw ShapeError("slice_cols out of range");
  Tensor out({n, count});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = a.value()[r * d + begin + c];
  return make_result(std::move(out), {a}, [n, d, begin, count](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < count; ++c) g[r * d + begin + c] += self.grad[r * count + c];
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), {a}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t n = x.value().rows(), d = x.value().cols();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw ShapeError("layer_norm width " + std::to_string(d) + " vs gamma " + shape_str(gamma.shape()));
  }
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(n * d);
  auto rstd = std::make_shared<std::vector<double>>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.value().data().data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (row[c] - mu) * rs;
      (*xhat)[r * d + c] = h;
      out[r * d + c] = h * gamma.value()[c] + beta.value()[c];
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, [n, d, xhat, rstd](Node& self) {
    Node* px = self.parents[0].get();
    Node* pg = self.parents[1].get();
    Node* pb = self.parents[2].get();
    const Tensor& g = self.grad;
    if (pg->requires_grad) {
      Tensor& gg = pg->grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) gg[c] += g[r * d + c] * (*xhat)[r * d + c];
    }
    if (pb->requires_grad) {
      Tensor& gb = pb->grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
    }
    if (px->requires_grad) {
      Tensor& gx = px->grad_buffer();
      std::vector<double> dh(d);
      for (std::size_t r = 0; r < n; ++r) {
        double mean_dh = 0.0, mean_dhh = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          dh[c] = g[r * d + c] * pg->value[c];
          mean_dh += dh[c];
          mean_dhh += dh[c] * (*xhat)[r * d + c];
        }
        mean_dh /= static_cast<double>(d);
        mean_dhh /= static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c) {
          gx[r * d + c] += (*rstd)[r] * (dh[c] - mean_dh - (*xhat)[r * d + c] * mean_dhh);
        }
      }
    }
  });
}

Var gelu(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.value()[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Node* px = self.parents[0].get();
    Tensor& g = px->grad_buffer();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = px->value[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.value()[i];
    out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().vec()) s += v;
  return make_result(Tensor::scalar(s), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    const double up = self.grad[0];
    for (auto& v : g.vec()) v += up;
  });
}

Var softmax_rows(const Var& x, const BoolMatrix* mask) {
  const std::size_t n = x.value().rows(), m = x.value().cols();
  if (mask && (mask->rows != n || mask->cols != m)) {
    throw ShapeError("mask " + std::to_string(mask->rows) + "x" + std::to_string(mask->cols) + " vs logits " +
                     shape_str(x.shape()));
  }
  Tensor out({n, m});
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.value().data().data() + r * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c)
      if (!mask || (*mask)(r, c)) mx = std::max(mx, row[c]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw DegenerateMaskError("row " + std::to_string(r) + " has no allowed key");
    }
    double z = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double e = (!mask || (*mask)(r, c)) ? std::exp(row[c] - mx) : 0.0;
      out[r * m + c] = e;
      z += e;
    }
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] /= z;
  }
  return make_result(std::move(out), {x}, [n, m](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < m; ++c) dot += self.value[r * m + c] * self.grad[r * m + c];
      for (std::size_t c = 0; c < m; ++c) {
        g[r * m + c] += self.value[r * m + c] * (self.grad[r * m + c] - dot);
      }
    }
  });
}

Var cosine_rows(const Var& f, const Var& x, double eps) {
  const std::size_t n = f.value().rows(), d = f.value().cols();
  if (x.value().size() != d) throw ShapeError("cosine_rows width " + std::to_string(d) + " vs " + shape_str(x.shape()));
  const double* xv = x.value().data().data();
  const double nx = l2_norm(x.value().data());
  Tensor out({n});
  std::vector<double> dots(n), norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* fi = f.value().data().data() + i * d;
    double dot = 0.0, nf = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dot += fi[c] * xv[c];
      nf += fi[c] * fi[c];
    }
    dots[i] = dot;
    norms[i] = std::sqrt(nf);
    out[i] = dot / (norms[i] * nx + eps);
  }
  return make_result(std::move(out), {f, x}, [n, d, nx, eps, dots, norms](Node& self) {
    Node* pf = self.parents[0].get();
    Node* px = self.parents[1].get();
    const double* xv = px->value.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = self.grad[i];
      if (g == 0.0) continue;
      const double denom = norms[i] * nx + eps;
      const double a = g / denom;
      const double b = g * dots[i] / (denom * denom);
      const double* fi = pf->value.data().data() + i * d;
      if (pf->requires_grad && norms[i] > 0.0) {
        Tensor& gf = pf->grad_buffer();
        for (std::size_t c = 0; c < d; ++c) gf[i * d + c] += a * xv[c] - b * nx * fi[c] / norms[i];
      }
      if (px->requires_grad && nx > 0.0) {
        Tensor& gx = px->grad_buffer();
        for (std::size_t c = 0; c < d; ++c) gx[c] += a * fi[c] - b * norms[i] * xv[c] / nx;
      }
    }
  });
}

Var masked_pool(const Var& w, const Var& f, double eps) {
  const std::size_t n = f.value().rows(), d = f.value().cols();
  if (w.value().size() != n) throw ShapeError("masked_pool weights " + shape_str(w.shape()) + " vs " + shape_str(f.shape()));
  double z = eps;
  for (double v : w.value().vec()) z += v;
  Tensor out({d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) out[c] += w.value()[i] * f.value()[i * d + c];
  for (auto& v : out.vec()) v /= z;
  return make_result(std::move(out), {w, f}, [n, d, z](Node& self) {
    Node* pw = self.parents[0].get();
    Node* pf = self.parents[1].get();
    if (pf->requires_grad) {
      Tensor& gf = pf->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) gf[i * d + c] += pw->value[i] * self.grad[c] / z;
    }
    if (pw->requires_grad) {
      Tensor& gw = pw->grad_buffer();
      double og = 0.0;
      for (std::size_t c = 0; c < d; ++c) og += self.value[c] * self.grad[c];
      for (std::size_t i = 0; i < n; ++i) {
        double fg = 0.0;
        for (std::size_t c = 0; c < d; ++c) fg += pf->value[i * d + c] * self.grad[c];
        gw[i] += (fg - og) / z;
      }
    }
  });
}

Var dice_loss(const Var& pred, const Tensor& target, double smooth) {
  if (pred.value().size() != target.size()) throw ShapeError("dice_loss pred/target size mismatch");
  double sp = 0.0, sy = 0.0, spy = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    sp += pred.value()[i];
    sy += target[i];
    spy += pred.value()[i] * target[i];
  }
  const double num = 2.0 * spy + smooth, den = sp + sy + smooth;
  return make_result(Tensor::scalar(1.0 - num / den), {pred}, [target, num, den](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= up * (2.0 * target[i] * den - num) / (den * den);
  });
}

Var focal_loss(const Var& pred, const Tensor& target, double gamma, double alpha, double clamp) {
  if (pred.value().size() != target.size()) throw ShapeError("focal_loss pred/target size mismatch");
  const std::size_t n = target.size();
  auto term = [gamma, alpha](double pt, double at) { return -at * std::pow(1.0 - pt, gamma) * std::log(pt); };
  auto dterm = [gamma, alpha](double pt, double at) {
    const double q = 1.0 - pt;
    const double lead = gamma == 0.0 ? 0.0 : -gamma * std::pow(q, gamma - 1.0) * std::log(pt);
    return -at * (lead + std::pow(q, gamma) / pt);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred.value()[i], clamp, 1.0 - clamp);
    const double y = target[i];
    total += y * term(p, alpha) + (1.0 - y) * term(1.0 - p, 1.0 - alpha);
  }
  return make_result(Tensor::scalar(total / static_cast<double>(n)), {pred},
                     [target, n, clamp, alpha, dterm](Node& self) {
                       Node* pp = self.parents[0].get();
                       Tensor& g = pp->grad_buffer();
                       const double up = self.grad[0] / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double raw = pp->value[i];
                         if (raw <= clamp || raw >= 1.0 - clamp) continue;
                         const double y = target[i];
                         g[i] += up * (y * dterm(raw, alpha) - (1.0 - y) * dterm(1.0 - raw, 1.0 - alpha));
                       }
                     });
}

}  // namespace ad
}  // namespace vlprvos
