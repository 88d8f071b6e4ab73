#pragma once

#include <optional>
#include <vector>

#include "npel/types.hpp"

namespace npel {

/// Weighted multinomial logistic regression with per-sample-per-class weights.
/// design carries the intercept column; the reference class (row 0 of the
/// coefficient matrix) is pinned to zero. The ridge penalty hits slope
/// coefficients only, never intercepts.
struct WmlProblem {
  MatrixXd design;   // n x (d+1), first column is the intercept
  MatrixXd weights;  // n x K, finite and >= 0; rows may sum to any positive value
  double ridge = 0.0;

  Index n() const { return design.rows(); }
  Index dim() const { return design.cols(); }
  Index num_classes() const { return weights.cols(); }

  static WmlProblem from_basis(const MatrixXd& basis_view, MatrixXd weights,
                               double ridge = 0.0);
};

struct WmlConfig {
  double tol = 1e-6;  // infinity norm of the full free-coordinate gradient
  int max_iter = 100;
  std::optional<MatrixXd> init;  // K x (d+1); zeros when absent
};

struct WmlSolution {
  MatrixXd coeffs;  // K x (d+1), row 0 identically zero
  double final_objective = 0.0;
  int iterations = 0;
  double grad_norm = 0.0;
  std::vector<double> objective_trace;  // value after each accepted step
};

/// Weighted log-likelihood minus the ridge penalty:
///   sum_ik w_ik z_i'c_k - sum_i (sum_k w_ik) log sum_k exp(z_i'c_k)
///   - ridge * ||slope coefficients||^2.
double wml_objective(const WmlProblem& problem, const MatrixXd& coeffs);

/// Analytic gradient over the free coefficients (rows 1..K-1), returned in
/// the full K x (d+1) layout with row 0 zero.
MatrixXd wml_gradient(const WmlProblem& problem, const MatrixXd& coeffs);

/// Damped Newton with step halving; falls back to a gradient-ascent step when
/// the Hessian solve is unusable. The accepted objective sequence never
/// decreases. Throws SolveError (carrying the last iterate and gradient norm)
/// when max_iter is hit before the tolerance, e.g. on separable data with
/// ridge = 0.
WmlSolution wml_fit(const WmlProblem& problem, const WmlConfig& config = {});

}  // namespace npel
