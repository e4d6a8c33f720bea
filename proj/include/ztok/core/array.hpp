#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ztok/core/error.hpp"

namespace ztok {

// Dense real array of rank 1 or 2 with an optional same-shape gradient
// buffer. Rank-1 arrays behave as row vectors (1 x n) in matrix contexts.
// Training code instantiates Real = float; the finite-difference harness
// uses Real = double.
template <class Real>
class Array {
 public:
  using EMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<EMat>;
  using CMap = Eigen::Map<const EMat>;

  Array() = default;

  Array(std::vector<int> shape, std::vector<Real> values)
      : shape_(std::move(shape)), v_(std::move(values)) {
    ZTOK_CHECK(shape_.size() >= 1 && shape_.size() <= 2, logic, "array rank must be 1 or 2");
    for (int d : shape_) ZTOK_CHECK(d > 0, logic, "array dims must be positive");
    ZTOK_CHECK(static_cast<size_t>(count()) == v_.size(), logic,
               "array value count does not match shape");
  }

  static Array zeros(int rows, int cols) {
    return Array({rows, cols}, std::vector<Real>(static_cast<size_t>(rows) * cols, Real(0)));
  }
  static Array zeros_like(const Array& a) {
    Array out;
    out.shape_ = a.shape_;
    out.v_.assign(a.v_.size(), Real(0));
    return out;
  }
  static Array row(std::vector<Real> values) {
    int n = static_cast<int>(values.size());
    return Array({n}, std::move(values));
  }
  static Array scalar(Real x) { return Array({1, 1}, {x}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int rows() const { return rank() == 1 ? 1 : shape_[0]; }
  int cols() const { return rank() == 1 ? shape_[0] : shape_[1]; }
  long count() const {
    long n = 1;
    for (int d : shape_) n *= d;
    return n;
  }
  bool same_shape(const Array& o) const { return rows() == o.rows() && cols() == o.cols(); }

  Real* data() { return v_.data(); }
  const Real* data() const { return v_.data(); }
  std::vector<Real>& values() { return v_; }
  const std::vector<Real>& values() const { return v_; }
  Real& at(int r, int c) { return v_[static_cast<size_t>(r) * cols() + c]; }
  Real at(int r, int c) const { return v_[static_cast<size_t>(r) * cols() + c]; }
  Real& operator[](size_t i) { return v_[i]; }
  Real operator[](size_t i) const { return v_[i]; }

  Map mat() { return Map(v_.data(), rows(), cols()); }
  CMap mat() const { return CMap(v_.data(), rows(), cols()); }

  // Gradient buffer, allocated on demand. Empty means "absent".
  bool has_grad() const { return !g_.empty(); }
  void ensure_grad() {
    if (g_.empty()) g_.assign(v_.size(), Real(0));
  }
  void clear_grad() { g_.clear(); }
  std::vector<Real>& grad_values() { return g_; }
  Real* grad_data() { return g_.data(); }
  Map grad_mat() { return Map(g_.data(), rows(), cols()); }
  CMap grad_mat() const { return CMap(g_.data(), rows(), cols()); }

  bool all_finite() const {
    for (Real x : v_)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <class Other>
  Array<Other> cast() const {
    std::vector<Other> w(v_.size());
    for (size_t i = 0; i < v_.size(); ++i) w[i] = static_cast<Other>(v_[i]);
    return Array<Other>(shape_, std::move(w));
  }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + ")";
  }

 private:
  std::vector<int> shape_;
  std::vector<Real> v_;
  std::vector<Real> g_;
};

}  // namespace ztok
