#include "ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "error.hpp"

namespace wdistill::ops {

using detail::make_result;
using detail::Node;

namespace {

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] += s;
    }
  }
}

// c[m,n] += a[k,m]^T * b[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

std::string mismatch(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) + " and " +
         shape_to_string(b.shape());
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_to_string(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError(mismatch("matmul", a, b));
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](Node& self) {
    Node& na = in(self, 0);
    Node& nb = in(self, 1);
    if (na.requires_grad) gemm_nt(self.grad.data(), nb.value.data(), na.grad_buffer().data(), m, n, k);
    if (nb.requires_grad) gemm_tn(na.value.data(), self.grad.data(), nb.grad_buffer().data(), k, m, n);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank("bmm", a, 3);
  require_rank("bmm", b, 3);
  const std::size_t g = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != g || bk != k) throw ShapeError(mismatch("bmm", a, b));
  std::vector<double> out(g * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < g; ++i) {
    if (transpose_b) {
      gemm_nt(ad + i * m * k, bd + i * n * k, out.data() + i * m * n, m, k, n);
    } else {
      gemm_nn(ad + i * m * k, bd + i * k * n, out.data() + i * m * n, m, k, n);
    }
  }
  return make_result({g, m, n}, std::move(out), {a, b}, "bmm", [g, m, k, n, transpose_b](Node& self) {
    Node& na = in(self, 0);
    Node& nb = in(self, 1);
    const double* dc = self.grad.data();
    for (std::size_t i = 0; i < g; ++i) {
      const double* dci = dc + i * m * n;
      const double* ai = na.value.data() + i * m * k;
      if (transpose_b) {
        const double* bi = nb.value.data() + i * n * k;
        // c = a b^T: da = dc b, db = dc^T a
        if (na.requires_grad) gemm_nn(dci, bi, na.grad_buffer().data() + i * m * k, m, n, k);
        if (nb.requires_grad) gemm_tn(dci, ai, nb.grad_buffer().data() + i * n * k, n, m, k);
      } else {
        const double* bi = nb.value.data() + i * k * n;
        if (na.requires_grad) gemm_nt(dci, bi, na.grad_buffer().data() + i * m * k, m, n, k);
        if (nb.requires_grad) gemm_tn(ai, dci, nb.grad_buffer().data() + i * k * n, k, m, n);
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(mismatch("add", a, b));
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, "add", [](Node& self) {
    for (std::size_t j = 0; j < 2; ++j) {
      Node& n = in(self, j);
      if (!n.requires_grad) continue;
      auto& g = n.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(mismatch("hadamard", a, b));
  std::vector<double> out(a.size());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, "hadamard", [](Node& self) {
    Node& na = in(self, 0);
    Node& nb = in(self, 1);
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), {x}, "scale", [factor](Node& self) {
    auto& g = in(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", bias, 1);
  const std::size_t n = bias.dim(0);
  if (x.shape().back() != n) throw ShapeError(mismatch("add_bias", x, bias));
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bd = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % n];
  return make_result(x.shape(), std::move(out), {x, bias}, "add_bias", [n](Node& self) {
    Node& nx = in(self, 0);
    Node& nb = in(self, 1);
    if (nx.requires_grad) {
      auto& g = nx.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xd[i]);
  return make_result(x.shape(), std::move(out), {x}, "tanh", [](Node& self) {
    auto& g = in(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  return make_result(x.shape(), std::move(out), {x}, "relu", [](Node& self) {
    Node& nx = in(self, 0);
    auto& g = nx.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (nx.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({1}, {s}, {x}, "sum", [](Node& self) {
    auto& g = in(self, 0).grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, "reshape", [](Node& self) {
    auto& g = in(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor split_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads) {
  require_rank("split_heads", x, 2);
  const std::size_t d = x.dim(1);
  if (x.dim(0) != batch * seq || heads == 0 || d % heads != 0) {
    throw ShapeError("split_heads: cannot split " + shape_to_string(x.shape()) + " into " + std::to_string(batch) +
                     "x" + std::to_string(seq) + " rows and " + std::to_string(heads) + " heads");
  }
  const std::size_t e = d / heads;
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < seq; ++t)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(xd.data() + (b * seq + t) * d + h * e, e, out.data() + ((b * heads + h) * seq + t) * e);
  return make_result({batch * heads, seq, e}, std::move(out), {x}, "split_heads",
                     [batch, seq, heads, d, e](Node& self) {
                       auto& g = in(self, 0).grad_buffer();
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t t = 0; t < seq; ++t)
                           for (std::size_t h = 0; h < heads; ++h) {
                             const double* src = self.grad.data() + ((b * heads + h) * seq + t) * e;
                             double* dst = g.data() + (b * seq + t) * d + h * e;
                             for (std::size_t i = 0; i < e; ++i) dst[i] += src[i];
                           }
                     });
}

Tensor merge_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads) {
  require_rank("merge_heads", x, 3);
  if (x.dim(0) != batch * heads || x.dim(1) != seq) {
    throw ShapeError("merge_heads: unexpected shape " + shape_to_string(x.shape()));
  }
  const std::size_t e = x.dim(2);
  const std::size_t d = e * heads;
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < seq; ++t)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(xd.data() + ((b * heads + h) * seq + t) * e, e, out.data() + (b * seq + t) * d + h * e);
  return make_result({batch * seq, d}, std::move(out), {x}, "merge_heads", [batch, seq, heads, d, e](Node& self) {
    auto& g = in(self, 0).grad_buffer();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < seq; ++t)
        for (std::size_t h = 0; h < heads; ++h) {
          const double* src = self.grad.data() + (b * seq + t) * d + h * e;
          double* dst = g.data() + ((b * heads + h) * seq + t) * e;
          for (std::size_t i = 0; i < e; ++i) dst[i] += src[i];
        }
  });
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> allowed) {
  if (allowed.size() != x.size()) {
    throw ShapeError("masked_softmax: mask of " + std::to_string(allowed.size()) + " entries for tensor " +
                     shape_to_string(x.shape()));
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  auto xd = x.data();
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * n;
    const std::uint8_t* ar = allowed.data() + r * n;
    double* yr = out.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (ar[j]) mx = std::max(mx, xr[j]);
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (ar[j]) {
        yr[j] = std::exp(xr[j] - mx);
        z += yr[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  return make_result(x.shape(), std::move(out), {x}, "masked_softmax", [n, rows](Node& self) {
    auto& g = in(self, 0).grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* dy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank("layer_norm", x, 2);
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) throw ShapeError(mismatch("layer_norm", x, gain));
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  std::vector<double> normed(x.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      normed[r * d + j] = (xr[j] - mu) * inv;
      out[r * d + j] = normed[r * d + j] * gd[j] + bd[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gain, bias}, "layer_norm",
      [rows, d, normed = std::move(normed), inv_std = std::move(inv_std)](Node& self) {
        Node& nx = in(self, 0);
        Node& ng = in(self, 1);
        Node& nb = in(self, 2);
        const double* dy = self.grad.data();
        if (ng.requires_grad) {
          auto& g = ng.grad_buffer();
          for (std::size_t i = 0; i < rows * d; ++i) g[i % d] += dy[i] * normed[i];
        }
        if (nb.requires_grad) {
          auto& g = nb.grad_buffer();
          for (std::size_t i = 0; i < rows * d; ++i) g[i % d] += dy[i];
        }
        if (nx.requires_grad) {
          auto& g = nx.grad_buffer();
          std::vector<double> dn(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dn[j] = dy[r * d + j] * ng.value[j];
              s1 += dn[j];
              s2 += dn[j] * normed[r * d + j];
            }
            const double k = inv_std[r] / static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              g[r * d + j] += k * (static_cast<double>(d) * dn[j] - s1 - normed[r * d + j] * s2);
            }
          }
        }
      });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank("embedding", table, 2);
  const std::size_t v = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  std::vector<double> out(ids.size() * d);
  auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(v) +
                       " rows");
    }
    std::copy_n(td.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make_result({ids.size(), d}, std::move(out), {table}, "embedding",
                     [d, idx = std::move(idx)](Node& self) {
                       auto& g = in(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         double* dst = g.data() + static_cast<std::size_t>(idx[i]) * d;
                         const double* src = self.grad.data() + i * d;
                         for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                       }
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& target, std::span<const std::uint8_t> mask) {
  require_rank("softmax_cross_entropy", logits, 2);
  if (target.shape() != logits.shape()) throw ShapeError(mismatch("softmax_cross_entropy", logits, target));
  const std::size_t n = logits.dim(0), v = logits.dim(1);
  if (mask.size() != n) {
    throw ShapeError("softmax_cross_entropy: mask of " + std::to_string(mask.size()) + " rows for " +
                     shape_to_string(logits.shape()));
  }
  auto ld = logits.data();
  auto td = target.data();
  std::vector<double> probs = softmax_rows(ld, v);
  std::size_t active = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!mask[r]) continue;
    ++active;
    const double* lr = ld.data() + r * v;
    const double* tr = td.data() + r * v;
    double row_sum = 0.0;
    for (std::size_t j = 0; j < v; ++j) row_sum += tr[j];
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw NumericError("softmax_cross_entropy: target row " + std::to_string(r) + " sums to " +
                         std::to_string(row_sum) + ", not a distribution");
    }
    const double mx = *std::max_element(lr, lr + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(lr[j] - mx);
    const double lse = mx + std::log(z);
    double row = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      if (tr[j] != 0.0) row -= tr[j] * (lr[j] - lse);
    }
    total += row;
  }
  if (active == 0) throw ShapeError("softmax_cross_entropy: every row is masked");
  const double inv = 1.0 / static_cast<double>(active);
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return make_result(
      {1}, {total * inv}, {logits, target}, "softmax_cross_entropy",
      [n, v, inv, probs = std::move(probs), keep = std::move(keep)](Node& self) {
        Node& nl = in(self, 0);
        if (!nl.requires_grad) return;
        const Node& nt = in(self, 1);
        auto& g = nl.grad_buffer();
        const double up = self.grad[0] * inv;
        for (std::size_t r = 0; r < n; ++r) {
          if (!keep[r]) continue;
          double row_sum = 0.0;
          for (std::size_t j = 0; j < v; ++j) row_sum += nt.value[r * v + j];
          for (std::size_t j = 0; j < v; ++j) {
            g[r * v + j] += up * (probs[r * v + j] * row_sum - nt.value[r * v + j]);
          }
        }
      });
}

Tensor mode_product(const Tensor& x, const Tensor& m, std::size_t axis) {
  require_rank("mode_product", x, 3);
  require_rank("mode_product", m, 2);
  if (axis > 2 || x.dim(axis) != m.dim(0)) {
    throw ShapeError("mode_product: cannot contract axis " + std::to_string(axis) + " of " +
                     shape_to_string(x.shape()) + " with " + shape_to_string(m.shape()));
  }
  const std::size_t a0 = x.dim(0), a1 = x.dim(1), a2 = x.dim(2), r = m.dim(1);
  Shape out_shape = x.shape();
  out_shape[axis] = r;
  std::vector<double> out(shape_size(out_shape), 0.0);
  const double* xd = x.data().data();
  const double* md = m.data().data();
  switch (axis) {
    case 0:
      gemm_tn(md, xd, out.data(), r, a0, a1 * a2);
      break;
    case 1:
      for (std::size_t i = 0; i < a0; ++i) gemm_tn(md, xd + i * a1 * a2, out.data() + i * r * a2, r, a1, a2);
      break;
    default:
      gemm_nn(xd, md, out.data(), a0 * a1, a2, r);
      break;
  }
  return make_result(std::move(out_shape), std::move(out), {x, m}, "mode_product",
                     [axis, a0, a1, a2, r](Node& self) {
                       Node& nx = in(self, 0);
                       Node& nm = in(self, 1);
                       const double* dy = self.grad.data();
                       switch (axis) {
                         case 0:
                           if (nx.requires_grad)
                             gemm_nn(nm.value.data(), dy, nx.grad_buffer().data(), a0, r, a1 * a2);
                           if (nm.requires_grad)
                             gemm_nt(nx.value.data(), dy, nm.grad_buffer().data(), a0, a1 * a2, r);
                           break;
                         case 1:
                           for (std::size_t i = 0; i < a0; ++i) {
                             const double* dyi = dy + i * r * a2;
                             if (nx.requires_grad)
                               gemm_nn(nm.value.data(), dyi, nx.grad_buffer().data() + i * a1 * a2, a1, r, a2);
                             if (nm.requires_grad)
                               gemm_nt(nx.value.data() + i * a1 * a2, dyi, nm.grad_buffer().data(), a1, a2, r);
                           }
                           break;
                         default:
                           if (nx.requires_grad)
                             gemm_nt(dy, nm.value.data(), nx.grad_buffer().data(), a0 * a1, r, a2);
                           if (nm.requires_grad)
                             gemm_tn(nx.value.data(), dy, nm.grad_buffer().data(), a2, a0 * a1, r);
                           break;
                       }
                     });
}

std::vector<double> softmax_rows(std::span<const double> x, std::size_t cols) {
  if (cols == 0 || x.size() % cols != 0) throw ShapeError("softmax_rows: buffer is not a whole number of rows");
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < x.size() / cols; ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = out.data() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= z;
  }
  return out;
}

}  // namespace wdistill::ops
