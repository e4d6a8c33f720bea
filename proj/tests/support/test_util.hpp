#pragma once

#include <functional>
#include <vector>

#include "ztok/core/gradcheck.hpp"
#include "ztok/core/ops.hpp"
#include "ztok/core/rng.hpp"

namespace ztok::testutil {

template <class Real>
Array<Real> random_array(int rows, int cols, RngState& rng, double scale = 1.0) {
  Array<Real> a = Array<Real>::zeros(rows, cols);
  for (long i = 0; i < a.count(); ++i)
    a[i] = static_cast<Real>(rng.next_normal() * scale);
  return a;
}

// Finite-difference check of one tape op with respect to one input. The
// builder maps (graph, x) to a scalar output; typically it projects a matrix
// output against a fixed probe so the op's full Jacobian is exercised.
template <class Real, class Builder>
Real op_fd_check(const Array<Real>& point, Builder&& build, Real step) {
  auto f = [&](const Array<Real>& x) -> Real {
    Graph<Real> g;
    Var vx = g.leaf(x, true);
    Var y = build(g, vx);
    return g.val(y).values()[0];
  };
  Graph<Real> g;
  Var vx = g.leaf(point, true);
  Var y = build(g, vx);
  g.backward(y);
  Array<Real> analytic = g.grad(vx);
  return gradient_check<Real>(f, point, analytic, step);
}

// Projects a matrix-valued var to a scalar with a fixed pseudo-random probe.
template <class Real>
Var probe_scalar(Graph<Real>& g, Var y, uint64_t seed = 99) {
  RngState rng(seed);
  Array<Real> p = Array<Real>::zeros_like(g.val(y));
  for (long i = 0; i < p.count(); ++i) p[i] = static_cast<Real>(rng.next_normal());
  return sum_all(g, hadamard(g, y, g.constant(std::move(p))));
}

}  // namespace ztok::testutil
