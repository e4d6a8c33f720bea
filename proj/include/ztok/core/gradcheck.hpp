#pragma once

#include <functional>
#include <vector>

#include "ztok/core/array.hpp"

namespace ztok {

// Central-difference gradient verification. `f` must be a deterministic
// scalar map (fix all RNG seeds inside); `analytic` is the gradient claimed
// by the implementation at `point`. Returns the max over checked
// coordinates of |analytic - fd| / max(|analytic|, |fd|, eps).
//
// The denominator floor eps absorbs finite-difference roundoff at
// coordinates whose true gradient is near zero (central differences carry
// noise of order machine_eps * |f| / step, which no implementation can
// beat). `coords` limits the sweep to the given coordinate subset (useful
// for end-to-end checks over large parameter vectors); empty means all.
template <class Real>
Real gradient_check(const std::function<Real(const Array<Real>&)>& f, const Array<Real>& point,
                    const Array<Real>& analytic, Real step,
                    const std::vector<long>& coords = {}, Real eps = Real(1e-5)) {
  ZTOK_CHECK(point.count() == analytic.count(), input, "gradient_check: gradient shape mismatch");
  ZTOK_CHECK(step > Real(0), input, "gradient_check: step must be > 0");
  Real worst = Real(0);
  Array<Real> x = point;
  auto probe = [&](long i) {
    Real orig = x[i];
    x[i] = orig + step;
    Real fp = f(x);
    x[i] = orig - step;
    Real fm = f(x);
    x[i] = orig;
    Real fd = (fp - fm) / (Real(2) * step);
    Real an = analytic[i];
    ZTOK_CHECK(std::isfinite(static_cast<double>(fd)) && std::isfinite(static_cast<double>(an)),
               runtime, "gradient_check: NaN in estimate");
    Real denom = std::max({std::abs(an), std::abs(fd), eps});
    worst = std::max(worst, std::abs(an - fd) / denom);
  };
  if (coords.empty()) {
    for (long i = 0; i < point.count(); ++i) probe(i);
  } else {
    for (long i : coords) {
      ZTOK_CHECK(i >= 0 && i < point.count(), input, "gradient_check: coord out of range");
      probe(i);
    }
  }
  return worst;
}

}  // namespace ztok
