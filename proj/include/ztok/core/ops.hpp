#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "ztok/core/graph.hpp"
#include "ztok/core/rng.hpp"

namespace ztok {

// Elementwise and matrix ops over Graph vars. Forward values are computed
// eagerly; each op registers the usual vector-Jacobian products.

namespace detail {
template <class Real, class F>
Var emit(Graph<Real>& g, Array<Real> value, std::initializer_list<Var> inputs, F&& back) {
  // Node id will be the current size; safe because make() pushes exactly one.
  Var out{static_cast<int>(g.size())};
  Var got = g.make(std::move(value), inputs,
                   [out, back = std::forward<F>(back)](Graph<Real>& gr) { back(gr, out); });
  ZTOK_CHECK(got.id == out.id, logic, "emit: node id drift");
  return got;
}
}  // namespace detail

template <class Real>
Var add(Graph<Real>& g, Var a, Var b) {
  ZTOK_CHECK(g.val(a).same_shape(g.val(b)), logic, "add: shape mismatch");
  Array<Real> out = Array<Real>::zeros_like(g.val(a));
  out.mat() = g.val(a).mat() + g.val(b).mat();
  return detail::emit(g, std::move(out), {a, b}, [a, b](Graph<Real>& gr, Var o) {
    auto go = gr.val(o).grad_mat();
    if (gr.needs_grad(a)) gr.grad_buf(a) += go;
    if (gr.needs_grad(b)) gr.grad_buf(b) += go;
  });
}

template <class Real>
Var sub(Graph<Real>& g, Var a, Var b) {
  ZTOK_CHECK(g.val(a).same_shape(g.val(b)), logic, "sub: shape mismatch");
  Array<Real> out = Array<Real>::zeros_like(g.val(a));
  out.mat() = g.val(a).mat() - g.val(b).mat();
  return detail::emit(g, std::move(out), {a, b}, [a, b](Graph<Real>& gr, Var o) {
    auto go = gr.val(o).grad_mat();
    if (gr.needs_grad(a)) gr.grad_buf(a) += go;
    if (gr.needs_grad(b)) gr.grad_buf(b) -= go;
  });
}

template <class Real>
Var hadamard(Graph<Real>& g, Var a, Var b) {
  ZTOK_CHECK(g.val(a).same_shape(g.val(b)), logic, "hadamard: shape mismatch");
  Array<Real> out = Array<Real>::zeros_like(g.val(a));
  out.mat() = g.val(a).mat().cwiseProduct(g.val(b).mat());
  return detail::emit(g, std::move(out), {a, b}, [a, b](Graph<Real>& gr, Var o) {
    auto go = gr.val(o).grad_mat();
    if (gr.needs_grad(a)) gr.grad_buf(a) += go.cwiseProduct(gr.val(b).mat());
    if (gr.needs_grad(b)) gr.grad_buf(b) += go.cwiseProduct(gr.val(a).mat());
  });
}

template <class Real>
Var scale(Graph<Real>& g, Var a, Real c) {
  Array<Real> out = Array<Real>::zeros_like(g.val(a));
  out.mat() = g.val(a).mat() * c;
  return detail::emit(g, std::move(out), {a}, [a, c](Graph<Real>& gr, Var o) {
    if (gr.needs_grad(a)) gr.grad_buf(a) += gr.val(o).grad_mat() * c;
  });
}

// a: (r x c), bias: (1 x c), broadcast over rows.
template <class Real>
Var add_rowvec(Graph<Real>& g, Var a, Var bias) {
  ZTOK_CHECK(g.val(bias).rows() == 1 && g.val(bias).cols() == g.val(a).cols(), logic,
             "add_rowvec: bias shape mismatch");
  Array<Real> out = Array<Real>::zeros_like(g.val(a));
  out.mat() = g.val(a).mat().rowwise() + g.val(bias).mat().row(0);
  return detail::emit(g, std::move(out), {a, bias}, [a, bias](Graph<Real>& gr, Var o) {
    auto go = gr.val(o).grad_mat();
    if (gr.needs_grad(a)) gr.grad_buf(a) += go;
    if (gr.needs_grad(bias)) gr.grad_buf(bias) += go.colwise().sum();
  });
}

template <class Real>
Var matmul(Graph<Real>& g, Var a, Var b, bool ta = false, bool tb = false) {
  const auto& A = g.val(a);
  const auto& B = g.val(b);
  int ar = ta ? A.cols() : A.rows(), ac = ta ? A.rows() : A.cols();
  int br = tb ? B.cols() : B.rows(), bc = tb ? B.rows() : B.cols();
  ZTOK_CHECK(ac == br, logic, "matmul: inner dims mismatch");
  Array<Real> out = Array<Real>::zeros(ar, bc);
  if (!ta && !tb)
    out.mat().noalias() = A.mat() * B.mat();
  else if (!ta && tb)
    out.mat().noalias() = A.mat() * B.mat().transpose();
  else if (ta && !tb)
    out.mat().noalias() = A.mat().transpose() * B.mat();
  else
    out.mat().noalias() = A.mat().transpose() * B.mat().transpose();
  return detail::emit(g, std::move(out), {a, b}, [a, b, ta, tb](Graph<Real>& gr, Var o) {
    auto G = gr.val(o).grad_mat();
    auto Am = gr.val(a).mat();
    auto Bm = gr.val(b).mat();
    if (gr.needs_grad(a)) {
      auto da = gr.grad_buf(a);
      if (!ta && !tb)
        da.noalias() += G * Bm.transpose();
      else if (!ta && tb)
        da.noalias() += G * Bm;
      else if (ta && !tb)
        da.noalias() += Bm * G.transpose();
      else
        da.noalias() += Bm.transpose() * G.transpose();
    }
    if (gr.needs_grad(b)) {
      auto db = gr.grad_buf(b);
      if (!ta && !tb)
        db.noalias() += Am.transpose() * G;
      else if (!ta && tb)
        db.noalias() += G.transpose() * Am;
      else if (ta && !tb)
        db.noalias() += Am * G;
      else
        db.noalias() += G.transpose() * Am.transpose();
    }
  });
}

template <class Real>
Var gather_rows(Graph<Real>& g, Var table, std::vector<int> ids) {
  const auto& T = g.val(table);
  ZTOK_CHECK(!ids.empty(), logic, "gather_rows: empty id list");
  for (int i : ids) ZTOK_CHECK(i >= 0 && i < T.rows(), logic, "gather_rows: id out of range");
  Array<Real> out = Array<Real>::zeros(static_cast<int>(ids.size()), T.cols());
  for (size_t r = 0; r < ids.size(); ++r) out.mat().row(static_cast<int>(r)) = T.mat().row(ids[r]);
  return detail::emit(g, std::move(out), {table},
                      [table, ids = std::move(ids)](Graph<Real>& gr, Var o) {
                        if (!gr.needs_grad(table)) return;
                        auto G = gr.val(o).grad_mat();
                        auto dt = gr.grad_buf(table);
                        for (size_t r = 0; r < ids.size(); ++r)
                          dt.row(ids[r]) += G.row(static_cast<int>(r));
                      });
}

template <class Real>
Var concat_rows(Graph<Real>& g, const std::vector<Var>& parts) {
  ZTOK_CHECK(!parts.empty(), logic, "concat_rows: no parts");
  int cols = g.val(parts[0]).cols(), rows = 0;
  for (Var p : parts) {
    ZTOK_CHECK(g.val(p).cols() == cols, logic, "concat_rows: column mismatch");
    rows += g.val(p).rows();
  }
  Array<Real> out = Array<Real>::zeros(rows, cols);
  int r0 = 0;
  for (Var p : parts) {
    out.mat().middleRows(r0, g.val(p).rows()) = g.val(p).mat();
    r0 += g.val(p).rows();
  }
  bool req = false;
  for (Var p : parts) req = req || g.needs_grad(p);
  Var o{static_cast<int>(g.size())};
  std::vector<Var> ps = parts;
  return g.make_req(std::move(out), req, [o, ps = std::move(ps)](Graph<Real>& gr) {
    if (!gr.val(o).has_grad()) return;
    auto G = gr.val(o).grad_mat();
    int r0 = 0;
    for (Var p : ps) {
      int n = gr.val(p).rows();
      if (gr.needs_grad(p)) gr.grad_buf(p) += G.middleRows(r0, n);
      r0 += n;
    }
  });
}

template <class Real>
Var slice_rows(Graph<Real>& g, Var a, int r0, int n) {
  const auto& A = g.val(a);
  ZTOK_CHECK(r0 >= 0 && n > 0 && r0 + n <= A.rows(), logic, "slice_rows: range out of bounds");
  Array<Real> out = Array<Real>::zeros(n, A.cols());
  out.mat() = A.mat().middleRows(r0, n);
  return detail::emit(g, std::move(out), {a}, [a, r0, n](Graph<Real>& gr, Var o) {
    if (gr.needs_grad(a)) gr.grad_buf(a).middleRows(r0, n) += gr.val(o).grad_mat();
  });
}

namespace detail {
// Shared softmax backward: dx = (g - <g,y>) .* y per row, restricted to the
// row's support; entries outside the support are exactly zero in y already.
template <class Real, class YMap, class GMap, class DMap>
void softmax_vjp_row(const YMap& y, const GMap& gout, DMap dx, int lo, int hi) {
  Real dot = Real(0);
  for (int j = lo; j < hi; ++j) dot += gout(j) * y(j);
  for (int j = lo; j < hi; ++j) dx(j) += (gout(j) - dot) * y(j);
}
}  // namespace detail

// Softmax over columns [lo, hi) of every row; entries outside the segment
// are exactly zero in the output (not merely small).
template <class Real>
Var segment_softmax_rows(Graph<Real>& g, Var a, int lo, int hi) {
  const auto& A = g.val(a);
  ZTOK_CHECK(0 <= lo && lo < hi && hi <= A.cols(), logic, "segment_softmax: bad segment");
  Array<Real> out = Array<Real>::zeros(A.rows(), A.cols());
  for (int r = 0; r < A.rows(); ++r) {
    Real mx = A.at(r, lo);
    for (int j = lo + 1; j < hi; ++j) mx = std::max(mx, A.at(r, j));
    Real sum = Real(0);
    for (int j = lo; j < hi; ++j) {
      Real e = std::exp(A.at(r, j) - mx);
      out.at(r, j) = e;
      sum += e;
    }
    for (int j = lo; j < hi; ++j) out.at(r, j) /= sum;
  }
  return detail::emit(g, std::move(out), {a}, [a, lo, hi](Graph<Real>& gr, Var o) {
    if (!gr.needs_grad(a)) return;
    const auto& Y = gr.val(o);
    auto G = gr.val(o).grad_mat();
    auto dx = gr.grad_buf(a);
    for (int r = 0; r < Y.rows(); ++r)
      detail::softmax_vjp_row<Real>(Y.mat().row(r), G.row(r), dx.row(r), lo, hi);
  });
}

template <class Real>
Var softmax_rows(Graph<Real>& g, Var a) {
  return segment_softmax_rows(g, a, 0, g.val(a).cols());
}

template <class Real>
Var log_op(Graph<Real>& g, Var a) {
  const auto& A = g.val(a);
  Array<Real> out = Array<Real>::zeros_like(A);
  out.mat() = A.mat().array().log().matrix();
  return detail::emit(g, std::move(out), {a}, [a](Graph<Real>& gr, Var o) {
    if (gr.needs_grad(a))
      gr.grad_buf(a) += gr.val(o).grad_mat().cwiseQuotient(gr.val(a).mat());
  });
}

// GELU, tanh approximation (smooth everywhere, finite-difference friendly).
template <class Real>
Var gelu(Graph<Real>& g, Var a) {
  const Real k = Real(0.7978845608028654);  // sqrt(2/pi)
  const Real c = Real(0.044715);
  const auto& A = g.val(a);
  Array<Real> out = Array<Real>::zeros_like(A);
  for (long i = 0; i < A.count(); ++i) {
    Real x = A[i];
    Real t = std::tanh(k * (x + c * x * x * x));
    out[i] = Real(0.5) * x * (Real(1) + t);
  }
  return detail::emit(g, std::move(out), {a}, [a, k, c](Graph<Real>& gr, Var o) {
    if (!gr.needs_grad(a)) return;
    const auto& A2 = gr.val(a);
    auto G = gr.val(o).grad_mat();
    auto dx = gr.grad_buf(a);
    for (int r = 0; r < A2.rows(); ++r)
      for (int j = 0; j < A2.cols(); ++j) {
        Real x = A2.at(r, j);
        Real u = k * (x + c * x * x * x);
        Real t = std::tanh(u);
        Real du = k * (Real(1) + Real(3) * c * x * x);
        Real d = Real(0.5) * (Real(1) + t) + Real(0.5) * x * (Real(1) - t * t) * du;
        dx(r, j) += G(r, j) * d;
      }
  });
}

template <class Real>
Var layer_norm_rows(Graph<Real>& g, Var a, Var gain, Var bias, Real eps = Real(1e-5)) {
  const auto& A = g.val(a);
  int c = A.cols();
  ZTOK_CHECK(g.val(gain).cols() == c && g.val(bias).cols() == c, logic, "layer_norm: param shape");
  Array<Real> out = Array<Real>::zeros_like(A);
  Array<Real> xhat = Array<Real>::zeros_like(A);
  std::vector<Real> inv_std(A.rows());
  for (int r = 0; r < A.rows(); ++r) {
    Real mu = A.mat().row(r).mean();
    Real var = Real(0);
    for (int j = 0; j < c; ++j) {
      Real d = A.at(r, j) - mu;
      var += d * d;
    }
    var /= Real(c);
    Real s = Real(1) / std::sqrt(var + eps);
    inv_std[r] = s;
    for (int j = 0; j < c; ++j) {
      Real xh = (A.at(r, j) - mu) * s;
      xhat.at(r, j) = xh;
      out.at(r, j) = xh * g.val(gain).at(0, j) + g.val(bias).at(0, j);
    }
  }
  return detail::emit(
      g, std::move(out), {a, gain, bias},
      [a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<Real>& gr,
                                                                            Var o) {
        auto G = gr.val(o).grad_mat();
        int rows = gr.val(a).rows(), c = gr.val(a).cols();
        if (gr.needs_grad(gain)) {
          auto dg = gr.grad_buf(gain);
          for (int r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j) dg(0, j) += G(r, j) * xhat.at(r, j);
        }
        if (gr.needs_grad(bias)) gr.grad_buf(bias) += G.colwise().sum();
        if (gr.needs_grad(a)) {
          auto dx = gr.grad_buf(a);
          const auto& gn = gr.val(gain);
          for (int r = 0; r < rows; ++r) {
            Real m1 = Real(0), m2 = Real(0);
            for (int j = 0; j < c; ++j) {
              Real u = G(r, j) * gn.at(0, j);
              m1 += u;
              m2 += u * xhat.at(r, j);
            }
            m1 /= Real(c);
            m2 /= Real(c);
            for (int j = 0; j < c; ++j) {
              Real u = G(r, j) * gn.at(0, j);
              dx(r, j) += inv_std[r] * (u - m1 - xhat.at(r, j) * m2);
            }
          }
        }
      });
}

template <class Real>
Var mean_all(Graph<Real>& g, Var a) {
  const auto& A = g.val(a);
  Array<Real> out = Array<Real>::scalar(A.mat().mean());
  Real inv = Real(1) / Real(A.count());
  return detail::emit(g, std::move(out), {a}, [a, inv](Graph<Real>& gr, Var o) {
    if (gr.needs_grad(a))
      gr.grad_buf(a).array() += gr.val(o).grad_values()[0] * inv;
  });
}

template <class Real>
Var sum_all(Graph<Real>& g, Var a) {
  Array<Real> out = Array<Real>::scalar(g.val(a).mat().sum());
  return detail::emit(g, std::move(out), {a}, [a](Graph<Real>& gr, Var o) {
    if (gr.needs_grad(a)) gr.grad_buf(a).array() += gr.val(o).grad_values()[0];
  });
}

// Mean over rows of the squared L2 distance between corresponding rows.
template <class Real>
Var mean_row_sqdist(Graph<Real>& g, Var a, Var b) {
  ZTOK_CHECK(g.val(a).same_shape(g.val(b)), logic, "mean_row_sqdist: shape mismatch");
  const auto& A = g.val(a);
  Real acc = (A.mat() - g.val(b).mat()).squaredNorm() / Real(A.rows());
  return detail::emit(g, Array<Real>::scalar(acc), {a, b}, [a, b](Graph<Real>& gr, Var o) {
    Real go = gr.val(o).grad_values()[0];
    Real c = Real(2) / Real(gr.val(a).rows());
    auto diff = gr.val(a).mat() - gr.val(b).mat();
    if (gr.needs_grad(a)) gr.grad_buf(a) += go * c * diff;
    if (gr.needs_grad(b)) gr.grad_buf(b) -= go * c * diff;
  });
}

// Cosine similarity of two vectors (any shape, compared flat). Errors on a
// zero-norm input rather than returning 0.
template <class Real>
Var cosine(Graph<Real>& g, Var a, Var b) {
  ZTOK_CHECK(g.val(a).count() == g.val(b).count(), logic, "cosine: length mismatch");
  const auto& A = g.val(a);
  const auto& B = g.val(b);
  Real na2 = A.mat().squaredNorm(), nb2 = B.mat().squaredNorm();
  ZTOK_CHECK(na2 > Real(0) && nb2 > Real(0), input, "cosine: zero-norm vector");
  Real na = std::sqrt(na2), nb = std::sqrt(nb2);
  Real dot = Real(0);
  for (long i = 0; i < A.count(); ++i) dot += A[i] * B[i];
  Real cs = dot / (na * nb);
  return detail::emit(g, Array<Real>::scalar(cs), {a, b},
                      [a, b, na, nb, cs](Graph<Real>& gr, Var o) {
                        Real go = gr.val(o).grad_values()[0];
                        const auto& Av = gr.val(a);
                        const auto& Bv = gr.val(b);
                        if (gr.needs_grad(a)) {
                          auto da = gr.grad_buf(a);
                          for (long i = 0; i < Av.count(); ++i)
                            da.data()[i] += go * (Bv[i] / (na * nb) - cs * Av[i] / (na * na));
                        }
                        if (gr.needs_grad(b)) {
                          auto db = gr.grad_buf(b);
                          for (long i = 0; i < Bv.count(); ++i)
                            db.data()[i] += go * (Av[i] / (na * nb) - cs * Bv[i] / (nb * nb));
                        }
                      });
}

// Mean cross-entropy of per-row targets under logits restricted to columns
// [lo, hi). Rows are clamped at -log(floor); clamped rows get zero gradient.
template <class Real>
Var ce_rows_mean(Graph<Real>& g, Var logits, std::vector<int> targets, int lo, int hi,
                 Real floor = Real(1e-9)) {
  const auto& L = g.val(logits);
  int n = L.rows();
  ZTOK_CHECK(static_cast<int>(targets.size()) == n, logic, "ce_rows_mean: target count");
  ZTOK_CHECK(0 <= lo && lo < hi && hi <= L.cols(), logic, "ce_rows_mean: bad segment");
  Real cap = -std::log(floor);
  std::vector<char> clamped(n, 0);
  Real total = Real(0);
  for (int r = 0; r < n; ++r) {
    int t = targets[r];
    ZTOK_CHECK(t >= lo && t < hi, logic, "ce_rows_mean: target outside segment");
    Real mx = L.at(r, lo);
    for (int j = lo + 1; j < hi; ++j) mx = std::max(mx, L.at(r, j));
    Real sum = Real(0);
    for (int j = lo; j < hi; ++j) sum += std::exp(L.at(r, j) - mx);
    Real ce = (mx + std::log(sum)) - L.at(r, t);
    if (ce > cap) {
      ce = cap;
      clamped[r] = 1;
    }
    total += ce;
  }
  Array<Real> out = Array<Real>::scalar(total / Real(n));
  return detail::emit(g, std::move(out), {logits},
                      [logits, targets = std::move(targets), lo, hi,
                       clamped = std::move(clamped)](Graph<Real>& gr, Var o) {
                        if (!gr.needs_grad(logits)) return;
                        Real go = gr.val(o).grad_values()[0];
                        const auto& L2 = gr.val(logits);
                        auto dl = gr.grad_buf(logits);
                        int n2 = L2.rows();
                        Real w = go / Real(n2);
                        for (int r = 0; r < n2; ++r) {
                          if (clamped[r]) continue;
                          Real mx = L2.at(r, lo);
                          for (int j = lo + 1; j < hi; ++j) mx = std::max(mx, L2.at(r, j));
                          Real sum = Real(0);
                          for (int j = lo; j < hi; ++j) sum += std::exp(L2.at(r, j) - mx);
                          for (int j = lo; j < hi; ++j) {
                            Real p = std::exp(L2.at(r, j) - mx) / sum;
                            dl(r, j) += w * (p - (j == targets[r] ? Real(1) : Real(0)));
                          }
                        }
                      });
}

// KL(mean of the row distributions || uniform over the columns). Rows are
// probability vectors; the zero-mass limit x*log(x) -> 0 is handled
// explicitly so a degenerate batch stays finite.
template <class Real>
Var kl_mean_to_uniform(Graph<Real>& g, Var soft_rows) {
  const auto& P = g.val(soft_rows);
  int n = P.rows(), c = P.cols();
  const Real tiny = Real(1e-30);
  std::vector<Real> m(c, Real(0));
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < c; ++j) m[j] += P.at(r, j);
  Real kl = Real(0);
  for (int j = 0; j < c; ++j) {
    m[j] /= Real(n);
    if (m[j] > tiny) kl += m[j] * std::log(m[j] * Real(c));
  }
  return detail::emit(g, Array<Real>::scalar(kl), {soft_rows},
                      [soft_rows, m = std::move(m), tiny](Graph<Real>& gr, Var o) {
                        if (!gr.needs_grad(soft_rows)) return;
                        Real go = gr.val(o).grad_values()[0];
                        const auto& P2 = gr.val(soft_rows);
                        int n2 = P2.rows(), c2 = P2.cols();
                        auto dp = gr.grad_buf(soft_rows);
                        for (int j = 0; j < c2; ++j) {
                          if (m[j] <= tiny) continue;
                          Real d = go * (std::log(m[j] * Real(c2)) + Real(1)) / Real(n2);
                          for (int r = 0; r < n2; ++r) dp(r, j) += d;
                        }
                      });
}

// Multi-head causal attention over already-projected Q, K, V (rows =
// positions, cols = model dim split evenly across heads). Query row i may
// attend keys [0, K.rows - Q.rows + i], i.e. queries are the suffix of the
// key timeline; this covers both the parallel pass (Q.rows == K.rows) and
// incremental decoding (Q.rows == 1).
template <class Real>
Var attend_causal(Graph<Real>& g, Var q, Var k, Var v, int n_heads) {
  const auto& Q = g.val(q);
  const auto& K = g.val(k);
  const auto& V = g.val(v);
  int qn = Q.rows(), kn = K.rows(), d = Q.cols();
  ZTOK_CHECK(K.cols() == d && V.cols() == d && V.rows() == kn, logic, "attend: shape mismatch");
  ZTOK_CHECK(d % n_heads == 0, logic, "attend: dim not divisible by heads");
  ZTOK_CHECK(kn >= qn, logic, "attend: fewer keys than queries");
  int dh = d / n_heads;
  int past = kn - qn;
  Real inv_sqrt = Real(1) / std::sqrt(Real(dh));

  // Per-head attention probabilities, kept for backward.
  auto probs = std::make_shared<std::vector<Array<Real>>>();
  probs->reserve(n_heads);
  Array<Real> out = Array<Real>::zeros(qn, d);
  for (int h = 0; h < n_heads; ++h) {
    auto Qh = Q.mat().middleCols(h * dh, dh);
    auto Kh = K.mat().middleCols(h * dh, dh);
    auto Vh = V.mat().middleCols(h * dh, dh);
    Array<Real> A = Array<Real>::zeros(qn, kn);
    A.mat().noalias() = Qh * Kh.transpose() * inv_sqrt;
    for (int i = 0; i < qn; ++i) {
      int valid = past + i + 1;
      Real mx = A.at(i, 0);
      for (int j = 1; j < valid; ++j) mx = std::max(mx, A.at(i, j));
      Real sum = Real(0);
      for (int j = 0; j < valid; ++j) {
        Real e = std::exp(A.at(i, j) - mx);
        A.at(i, j) = e;
        sum += e;
      }
      for (int j = 0; j < valid; ++j) A.at(i, j) /= sum;
      for (int j = valid; j < kn; ++j) A.at(i, j) = Real(0);
    }
    out.mat().middleCols(h * dh, dh).noalias() = A.mat() * Vh;
    probs->push_back(std::move(A));
  }
  return detail::emit(
      g, std::move(out), {q, k, v},
      [q, k, v, n_heads, dh, past, inv_sqrt, probs](Graph<Real>& gr, Var o) {
        auto G = gr.val(o).grad_mat();
        const auto& Q2 = gr.val(q);
        const auto& K2 = gr.val(k);
        int qn = Q2.rows(), kn = K2.rows();
        bool rq = gr.needs_grad(q), rk = gr.needs_grad(k), rv = gr.needs_grad(v);
        for (int h = 0; h < n_heads; ++h) {
          const Array<Real>& A = (*probs)[h];
          auto Qh = Q2.mat().middleCols(h * dh, dh);
          auto Kh = K2.mat().middleCols(h * dh, dh);
          auto Vh = gr.val(v).mat().middleCols(h * dh, dh);
          auto Gh = G.middleCols(h * dh, dh);
          using EM = typename Array<Real>::EMat;
          EM dA(qn, kn);
          dA.noalias() = Gh * Vh.transpose();
          if (rv) gr.grad_buf(v).middleCols(h * dh, dh).noalias() += A.mat().transpose() * Gh;
          // softmax vjp per row, then scores -> Q, K.
          EM dS = EM::Zero(qn, kn);
          for (int i = 0; i < qn; ++i) {
            int valid = past + i + 1;
            detail::softmax_vjp_row<Real>(A.mat().row(i), dA.row(i), dS.row(i), 0, valid);
          }
          if (rq) gr.grad_buf(q).middleCols(h * dh, dh).noalias() += dS * Kh * inv_sqrt;
          if (rk) gr.grad_buf(k).middleCols(h * dh, dh).noalias() += dS.transpose() * Qh * inv_sqrt;
        }
      });
}

// Straight-through embedding of one sampled code. Forward copies the hard
// row bit-for-bit; backward adds the upstream gradient both to the hard row
// and through the soft mixture (the stop-gradient term contributes nothing).
// relaxed == true swaps the forward value for the pure soft mixture, making
// the node an ordinary smooth op (used by gradient checks).
template <class Real>
Var st_embed(Graph<Real>& g, Var table, Var soft, int hard_local, int seg_lo, int seg_len,
             bool relaxed = false) {
  const auto& T = g.val(table);
  const auto& S = g.val(soft);
  ZTOK_CHECK(S.rows() == 1 && S.cols() == seg_len, logic, "st_embed: soft shape mismatch");
  ZTOK_CHECK(seg_lo >= 0 && seg_lo + seg_len <= T.rows(), logic, "st_embed: segment out of range");
  ZTOK_CHECK(hard_local >= 0 && hard_local < seg_len, logic, "st_embed: hard index out of range");
  Array<Real> out = Array<Real>::zeros(1, T.cols());
  if (relaxed) {
    out.mat().noalias() = S.mat() * T.mat().middleRows(seg_lo, seg_len);
  } else {
    // memcpy-like row copy keeps the forward bit-identical to the table row.
    out.mat().row(0) = T.mat().row(seg_lo + hard_local);
  }
  return detail::emit(g, std::move(out), {table, soft},
                      [table, soft, hard_local, seg_lo, seg_len, relaxed](Graph<Real>& gr, Var o) {
                        auto G = gr.val(o).grad_mat();
                        const auto& S2 = gr.val(soft);
                        if (gr.needs_grad(soft)) {
                          gr.grad_buf(soft).noalias() +=
                              G * gr.val(table).mat().middleRows(seg_lo, seg_len).transpose();
                        }
                        if (gr.needs_grad(table)) {
                          auto dt = gr.grad_buf(table);
                          dt.middleRows(seg_lo, seg_len).noalias() += S2.mat().transpose() * G;
                          if (!relaxed) dt.row(seg_lo + hard_local) += G.row(0);
                        }
                      });
}

// Pure soft mixture over a table segment: soft (1 x seg_len) times rows
// [seg_lo, seg_lo+seg_len). Used for the commitment loss's soft side.
template <class Real>
Var soft_mix(Graph<Real>& g, Var table, Var soft, int seg_lo, int seg_len) {
  const auto& T = g.val(table);
  const auto& S = g.val(soft);
  ZTOK_CHECK(S.rows() == 1 && S.cols() == seg_len, logic, "soft_mix: soft shape mismatch");
  Array<Real> out = Array<Real>::zeros(1, T.cols());
  out.mat().noalias() = S.mat() * T.mat().middleRows(seg_lo, seg_len);
  return detail::emit(g, std::move(out), {table, soft},
                      [table, soft, seg_lo, seg_len](Graph<Real>& gr, Var o) {
                        auto G = gr.val(o).grad_mat();
                        if (gr.needs_grad(soft))
                          gr.grad_buf(soft).noalias() +=
                              G * gr.val(table).mat().middleRows(seg_lo, seg_len).transpose();
                        if (gr.needs_grad(table))
                          gr.grad_buf(table).middleRows(seg_lo, seg_len).noalias() +=
                              gr.val(soft).mat().transpose() * G;
                      });
}

// Dropout with a fixed mask drawn at op creation; scales kept entries by
// 1/(1-rate). rate == 0 is the identity.
template <class Real>
Var dropout(Graph<Real>& g, Var a, Real rate, RngState& rng) {
  if (rate <= Real(0)) return a;
  ZTOK_CHECK(rate < Real(1), logic, "dropout: rate must be < 1");
  const auto& A = g.val(a);
  auto mask = std::make_shared<std::vector<Real>>(A.count());
  Real keep = Real(1) - rate;
  for (long i = 0; i < A.count(); ++i)
    (*mask)[i] = rng.next_uniform() < static_cast<double>(rate) ? Real(0) : Real(1) / keep;
  Array<Real> out = Array<Real>::zeros_like(A);
  for (long i = 0; i < A.count(); ++i) out[i] = A[i] * (*mask)[i];
  return detail::emit(g, std::move(out), {a}, [a, mask](Graph<Real>& gr, Var o) {
    if (!gr.needs_grad(a)) return;
    auto go = gr.val(o).grad_mat();
    auto da = gr.grad_buf(a);
    for (long i = 0; i < gr.val(a).count(); ++i) da.data()[i] += go.data()[i] * (*mask)[i];
  });
}

}  // namespace ztok
