#include "sharekd/numkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sharekd::nk {
namespace {

bool needs_grad(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a matrix, got " +
                                shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

// C[m,n] += A[m,k] B[k,n]
void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] B[n,k]^T
void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T B[k,n]
void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void check_probability_vector(std::span<const double> p, const char* op, const char* which) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || p[i] < 0.0) {
      throw std::invalid_argument(std::string(op) + ": " + which + "[" + std::to_string(i) +
                                  "] is not a probability");
    }
    total += p[i];
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(op) + ": " + which + " sums to " +
                                std::to_string(total) + ", not 1");
  }
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw std::invalid_argument("matmul: inner dims differ " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  mm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (needs_grad(tape, {&a, &b})) {
    tape.record(out, [a, b, out, m, k, n]() mutable {
      const double* g = out.grad().data();
      if (a.requires_grad()) mm_nt(g, b.data().data(), a.grad_mut().data(), m, n, k);
      if (b.requires_grad()) mm_tn(a.data().data(), g, b.grad_mut().data(), k, m, n);
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m});
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  if (needs_grad(tape, {&a})) {
    tape.record(out, [a, out, m, n]() mutable {
      auto g = out.grad();
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  if (w.rows() != k || b.size() != n) {
    throw std::invalid_argument("linear: incompatible shapes " + shape_str(x.shape()) + " " +
                                shape_str(w.shape()) + " " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  auto o = out.data();
  auto bias = b.data();
  for (std::size_t i = 0; i < m; ++i) std::copy(bias.begin(), bias.end(), o.begin() + i * n);
  mm_nn(x.data().data(), w.data().data(), o.data(), m, k, n);
  if (needs_grad(tape, {&x, &w, &b})) {
    tape.record(out, [x, w, b, out, m, k, n]() mutable {
      const double* g = out.grad().data();
      if (x.requires_grad()) mm_nt(g, w.data().data(), x.grad_mut().data(), m, n, k);
      if (w.requires_grad()) mm_tn(x.data().data(), g, w.grad_mut().data(), k, m, n);
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.clone();
  out.set_requires_grad(false);
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  if (needs_grad(tape, {&a, &b})) {
    tape.record(out, [a, b, out]() mutable {
      auto g = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor out = a.clone();
  out.set_requires_grad(false);
  for (double& v : out.data()) v *= factor;
  if (needs_grad(tape, {&a})) {
    tape.record(out, [a, out, factor]() mutable {
      auto g = out.grad();
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor out = Tensor::scalar(total);
  if (needs_grad(tape, {&a})) {
    tape.record(out, [a, out]() mutable {
      const double g = out.grad()[0];
      for (double& v : a.grad_mut()) v += g;
    });
  }
  return out;
}

Tensor gelu(Tape& tape, const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  Tensor out = x.clone();
  out.set_requires_grad(false);
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::tanh(c * (v + k * v * v * v)));
  if (needs_grad(tape, {&x})) {
    tape.record(out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad_mut();
      auto xv = x.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xv[i];
        const double t = std::tanh(c * (v + k * v * v * v));
        const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * k * v * v);
        gx[i] += g[i] * d;
      }
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  auto in = m.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!std::isfinite(in[i])) {
      throw std::invalid_argument("softmax_rows: non-finite input at index (" +
                                  std::to_string(i / cols) + "," + std::to_string(i % cols) + ")");
    }
  }
  Tensor out = Tensor::zeros(m.shape());
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * cols;
    double* orow = o.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += (orow[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) orow[j] /= total;
  }
  if (needs_grad(tape, {&m})) {
    tape.record(out, [m, out, rows, cols]() mutable {
      auto g = out.grad();
      auto y = out.data();
      auto gm = m.grad_mut();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += g[base + j] * y[base + j];
        for (std::size_t j = 0; j < cols; ++j) gm[base + j] += y[base + j] * (g[base + j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm_rows(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gamma.size() != cols || beta.size() != cols) {
    throw std::invalid_argument("layer_norm_rows: scale/shift must have " + std::to_string(cols) +
                                " entries");
  }
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  auto xv = x.data();
  auto o = out.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += row[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      const double h = (row[j] - mean) * inv_std[r];
      xhat[r * cols + j] = h;
      o[r * cols + j] = gv[j] * h + bv[j];
    }
  }
  if (needs_grad(tape, {&x, &gamma, &beta})) {
    tape.record(out, [x, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std),
                      rows, cols]() mutable {
      auto g = out.grad();
      auto gv = gamma.data();
      if (gamma.requires_grad()) {
        auto gg = gamma.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) gg[i % cols] += g[i] * xhat[i];
      }
      if (beta.requires_grad()) {
        auto gb = beta.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
      }
      if (x.requires_grad()) {
        auto gx = x.grad_mut();
        const double inv_n = 1.0 / static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * cols;
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            const double d = g[base + j] * gv[j];
            mean_d += d;
            mean_dx += d * xhat[base + j];
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          for (std::size_t j = 0; j < cols; ++j) {
            const double d = g[base + j] * gv[j];
            gx[base + j] += inv_std[r] * (d - mean_d - xhat[base + j] * mean_dx);
          }
        }
      }
    });
  }
  return out;
}

Tensor normalize_rows(Tape& tape, const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> norms(rows);
  auto xv = x.data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) ss += xv[r * cols + j] * xv[r * cols + j];
    norms[r] = std::max(std::sqrt(ss), 1e-12);
    for (std::size_t j = 0; j < cols; ++j) o[r * cols + j] = xv[r * cols + j] / norms[r];
  }
  if (needs_grad(tape, {&x})) {
    tape.record(out, [x, out, norms = std::move(norms), rows, cols]() mutable {
      auto g = out.grad();
      auto y = out.data();
      auto gx = x.grad_mut();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += g[base + j] * y[base + j];
        for (std::size_t j = 0; j < cols; ++j)
          gx[base + j] += (g[base + j] - y[base + j] * dot) / norms[r];
      }
    });
  }
  return out;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> ids) {
  require_rank2(table, "gather_rows");
  const std::size_t n = table.rows(), d = table.cols();
  if (ids.empty()) throw std::invalid_argument("gather_rows: no row ids");
  Tensor out = Tensor::zeros({ids.size(), d});
  auto src = table.data();
  auto o = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= n) {
      throw std::out_of_range("gather_rows: row id " + std::to_string(ids[i]) +
                              " out of range for " + std::to_string(n) + " rows");
    }
    std::copy_n(src.begin() + ids[i] * d, d, o.begin() + i * d);
  }
  if (needs_grad(tape, {&table})) {
    tape.record(out, [table, out, ids = std::vector<std::size_t>(ids.begin(), ids.end()),
                      d]() mutable {
      auto g = out.grad();
      auto gt = table.grad_mut();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += g[i * d + j];
    });
  }
  return out;
}

Tensor block_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v,
                       std::size_t seq_len, std::size_t heads) {
  require_rank2(q, "attention");
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const std::size_t total = q.rows(), d = q.cols();
  if (seq_len == 0 || total % seq_len != 0) {
    throw std::invalid_argument("attention: " + std::to_string(total) +
                                " rows do not split into sequences of " + std::to_string(seq_len));
  }
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("attention: width " + std::to_string(d) +
                                " not divisible into " + std::to_string(heads) + " heads");
  }
  const std::size_t blocks = total / seq_len, dk = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::size_t n = seq_len;

  Tensor out = Tensor::zeros({total, d});
  // probs[(block * heads + head) * n * n + i * n + j]
  std::vector<double> probs(blocks * heads * n * n);
  auto qv = q.data(), kv = k.data(), vv = v.data();
  auto o = out.data();
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* p = probs.data() + (b * heads + h) * n * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double* qi = qv.data() + (b * n + i) * d + h * dk;
        double* prow = p + i * n;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < n; ++j) {
          const double* kj = kv.data() + (b * n + j) * d + h * dk;
          double s = 0.0;
          for (std::size_t c = 0; c < dk; ++c) s += qi[c] * kj[c];
          prow[j] = s * inv_sqrt;
          mx = std::max(mx, prow[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (prow[j] = std::exp(prow[j] - mx));
        double* oi = o.data() + (b * n + i) * d + h * dk;
        for (std::size_t j = 0; j < n; ++j) {
          prow[j] /= z;
          const double* vj = vv.data() + (b * n + j) * d + h * dk;
          for (std::size_t c = 0; c < dk; ++c) oi[c] += prow[j] * vj[c];
        }
      }
    }
  }

  if (needs_grad(tape, {&q, &k, &v})) {
    tape.record(out, [q, k, v, out, probs = std::move(probs), blocks, heads, n, d, dk,
                      inv_sqrt]() mutable {
      auto g = out.grad();
      auto qv = q.data(), kv = k.data(), vv = v.data();
      double* gq = q.requires_grad() ? q.grad_mut().data() : nullptr;
      double* gk = k.requires_grad() ? k.grad_mut().data() : nullptr;
      double* gvv = v.requires_grad() ? v.grad_mut().data() : nullptr;
      std::vector<double> ds(n * n);
      for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const double* p = probs.data() + (b * heads + h) * n * n;
          for (std::size_t i = 0; i < n; ++i) {
            const double* gi = g.data() + (b * n + i) * d + h * dk;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double* vj = vv.data() + (b * n + j) * d + h * dk;
              double dp = 0.0;
              for (std::size_t c = 0; c < dk; ++c) dp += gi[c] * vj[c];
              ds[i * n + j] = dp;
              dot += dp * p[i * n + j];
              if (gvv) {
                double* gvj = gvv + (b * n + j) * d + h * dk;
                for (std::size_t c = 0; c < dk; ++c) gvj[c] += p[i * n + j] * gi[c];
              }
            }
            for (std::size_t j = 0; j < n; ++j)
              ds[i * n + j] = p[i * n + j] * (ds[i * n + j] - dot) * inv_sqrt;
          }
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              const double s = ds[i * n + j];
              if (s == 0.0) continue;
              const std::size_t ri = (b * n + i) * d + h * dk;
              const std::size_t rj = (b * n + j) * d + h * dk;
              if (gq)
                for (std::size_t c = 0; c < dk; ++c) gq[ri + c] += s * kv[rj + c];
              if (gk)
                for (std::size_t c = 0; c < dk; ++c) gk[rj + c] += s * qv[ri + c];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& probs, std::size_t label) {
  if (probs.rank() != 1) {
    throw std::invalid_argument("cross_entropy: expected a probability vector, got " +
                                shape_str(probs.shape()));
  }
  const std::size_t labels[] = {label};
  return cross_entropy_rows(tape, probs, labels);
}

Tensor cross_entropy_rows(Tape& tape, const Tensor& probs, std::span<const std::size_t> labels) {
  const std::size_t rows = probs.rows(), cols = probs.cols();
  if (labels.size() != rows) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(rows) + " rows");
  }
  auto p = probs.data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= cols) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[r]) +
                              " out of range for " + std::to_string(cols) + " classes");
    }
    total -= std::log(std::max(p[r * cols + labels[r]], kLogFloor));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(rows));
  if (needs_grad(tape, {&probs})) {
    tape.record(out, [probs, out, labels = std::vector<std::size_t>(labels.begin(), labels.end()),
                      rows, cols]() mutable {
      const double g = out.grad()[0] / static_cast<double>(rows);
      auto p = probs.data();
      auto gp = probs.grad_mut();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t idx = r * cols + labels[r];
        if (p[idx] > kLogFloor) gp[idx] -= g / p[idx];
      }
    });
  }
  return out;
}

Tensor kl_div(Tape& tape, const Tensor& p, const Tensor& q) {
  if (p.rank() != 1 || q.rank() != 1) {
    throw std::invalid_argument("kl_div: expected probability vectors");
  }
  return kl_div_rows(tape, p, q);
}

Tensor kl_div_rows(Tape& tape, const Tensor& p, const Tensor& q) {
  require_same_shape(p, q, "kl_div");
  const std::size_t rows = p.rows(), cols = p.cols();
  auto pv = p.data(), qv = q.data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    check_probability_vector(pv.subspan(r * cols, cols), "kl_div", "p");
    check_probability_vector(qv.subspan(r * cols, cols), "kl_div", "q");
    for (std::size_t j = 0; j < cols; ++j) {
      const double pi = pv[r * cols + j], qi = qv[r * cols + j];
      if (pi == 0.0) continue;
      if (qi == 0.0) {
        throw std::domain_error("kl_div: q[" + std::to_string(j) +
                                "] is 0 where p has mass; divergence is infinite");
      }
      total += pi * std::log(pi / qi);
    }
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(rows));
  if (needs_grad(tape, {&p, &q})) {
    tape.record(out, [p, q, out, rows]() mutable {
      const double g = out.grad()[0] / static_cast<double>(rows);
      auto pv = p.data(), qv = q.data();
      double* gp = p.requires_grad() ? p.grad_mut().data() : nullptr;
      double* gq = q.requires_grad() ? q.grad_mut().data() : nullptr;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (pv[i] == 0.0) continue;
        if (gp) gp[i] += g * (std::log(pv[i] / qv[i]) + 1.0);
        if (gq) gq[i] -= g * pv[i] / qv[i];
      }
    });
  }
  return out;
}

Tensor mse(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  auto av = a.data(), bv = b.data();
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += (av[i] - bv[i]) * (av[i] - bv[i]);
  Tensor out = Tensor::scalar(total);
  if (needs_grad(tape, {&a, &b})) {
    tape.record(out, [a, b, out]() mutable {
      const double g = out.grad()[0];
      auto av = a.data(), bv = b.data();
      double* ga = a.requires_grad() ? a.grad_mut().data() : nullptr;
      double* gb = b.requires_grad() ? b.grad_mut().data() : nullptr;
      for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = 2.0 * g * (av[i] - bv[i]);
        if (ga) ga[i] += d;
        if (gb) gb[i] -= d;
      }
    });
  }
  return out;
}

}  // namespace sharekd::nk
