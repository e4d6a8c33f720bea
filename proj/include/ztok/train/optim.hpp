#pragma once

#include <cmath>
#include <vector>

#include "ztok/core/array.hpp"

namespace ztok::train {

// Adaptive-moment optimizer with decoupled weight decay and bias-corrected
// moments. State is indexed by parameter slot in visitation order.
class AdamW {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void step(std::vector<Array<float>*>& params, const std::vector<Array<float>>& grads,
            const std::vector<char>& trainable, double lr) {
    ZTOK_CHECK(params.size() == grads.size() && params.size() == trainable.size(), logic,
               "optimizer: slot count mismatch");
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i]->values().size(), 0.0f);
        v_[i].assign(params[i]->values().size(), 0.0f);
      }
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      if (!trainable[i]) continue;
      auto& p = params[i]->values();
      const auto& g = grads[i].values();
      ZTOK_CHECK(p.size() == g.size(), logic, "optimizer: gradient shape mismatch");
      for (size_t k = 0; k < p.size(); ++k) {
        float gk = g[k];
        m_[i][k] = static_cast<float>(beta1 * m_[i][k] + (1.0 - beta1) * gk);
        v_[i][k] = static_cast<float>(beta2 * v_[i][k] + (1.0 - beta2) * gk * gk);
        double mhat = m_[i][k] / bc1;
        double vhat = v_[i][k] / bc2;
        p[k] = static_cast<float>(p[k] - lr * (mhat / (std::sqrt(vhat) + eps) +
                                               weight_decay * p[k]));
      }
    }
  }

  long step_count() const { return t_; }

 private:
  long t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// Warmup then cosine decay to zero.
inline double lr_at(double peak, long step, long total_steps, double warmup_frac) {
  long warm = static_cast<long>(warmup_frac * static_cast<double>(total_steps));
  if (warm < 1) warm = 1;
  if (step < warm) return peak * static_cast<double>(step + 1) / static_cast<double>(warm);
  if (total_steps <= warm) return peak;
  double f = static_cast<double>(step - warm) / static_cast<double>(total_steps - warm);
  return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * f));
}

inline double linear_at(double start, double end, long step, long total_steps) {
  if (total_steps <= 1) return end;
  double f = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  if (f > 1.0) f = 1.0;
  return start + (end - start) * f;
}

}  // namespace ztok::train
