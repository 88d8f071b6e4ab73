#pragma once

#include <cmath>
#include <limits>

#include "npel/types.hpp"

namespace npel {

/// log(sum(exp(v))) with max-subtraction. Returns -inf for an all -inf input.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf (or a stray +inf/NaN propagates)
  Scalar s = 0;
  for (Index i = 0; i < v.size(); ++i) s += std::exp(v(i) - m);
  return m + std::log(s);
}

/// Row-wise log-sum-exp of an n x K matrix.
template <typename Derived>
VectorXd rowwise_log_sum_exp(const Eigen::MatrixBase<Derived>& m) {
  VectorXd out(m.rows());
  for (Index i = 0; i < m.rows(); ++i) out(i) = log_sum_exp(m.row(i));
  return out;
}

/// In-place softmax of each row, computed with max-subtraction.
inline void softmax_rows_in_place(MatrixXd& logits) {
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - m).exp();
    logits.row(i) /= logits.row(i).sum();
  }
}

template <typename Scalar>
Scalar clamp_unit_open(Scalar p, Scalar eps = Scalar(1e-12)) {
  return std::min(Scalar(1) - eps, std::max(eps, p));
}

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

}  // namespace npel
