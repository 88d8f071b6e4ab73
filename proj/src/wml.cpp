#include "npel/wml.hpp"

#include <cmath>

#include "npel/numeric.hpp"

namespace npel {

WmlProblem WmlProblem::from_basis(const MatrixXd& basis_view, MatrixXd weights,
                                  double ridge) {
  WmlProblem problem;
  problem.design.resize(basis_view.rows(), basis_view.cols() + 1);
  problem.design.col(0).setOnes();
  problem.design.rightCols(basis_view.cols()) = basis_view;
  problem.weights = std::move(weights);
  problem.ridge = ridge;
  return problem;
}

namespace {

void check_problem(const WmlProblem& problem, const MatrixXd& coeffs) {
  if (problem.weights.rows() != problem.n()) {
    throw ValidationError("wml: weight rows do not match design rows");
  }
  if (coeffs.rows() != problem.num_classes() || coeffs.cols() != problem.dim()) {
    throw ValidationError("wml: coefficient shape mismatch");
  }
  if (problem.ridge < 0.0) throw ValidationError("wml: negative ridge");
  if (!problem.weights.allFinite() || (problem.weights.array() < 0.0).any()) {
    throw ValidationError("wml: weights must be finite and nonnegative");
  }
}

double slope_penalty(const WmlProblem& problem, const MatrixXd& coeffs) {
  if (problem.ridge == 0.0 || problem.dim() <= 1) return 0.0;
  return problem.ridge * coeffs.rightCols(problem.dim() - 1).squaredNorm();
}

}  // namespace

double wml_objective(const WmlProblem& problem, const MatrixXd& coeffs) {
  check_problem(problem, coeffs);
  const MatrixXd logits = problem.design * coeffs.transpose();  // n x K
  const double linear = (problem.weights.array() * logits.array()).sum();
  const VectorXd row_weight = problem.weights.rowwise().sum();
  const VectorXd lse = rowwise_log_sum_exp(logits);
  return linear - row_weight.dot(lse) - slope_penalty(problem, coeffs);
}

MatrixXd wml_gradient(const WmlProblem& problem, const MatrixXd& coeffs) {
  check_problem(problem, coeffs);
  MatrixXd probs = problem.design * coeffs.transpose();
  softmax_rows_in_place(probs);
  const VectorXd row_weight = problem.weights.rowwise().sum();
  MatrixXd resid = problem.weights - row_weight.asDiagonal() * probs;  // n x K
  MatrixXd grad = resid.transpose() * problem.design;                  // K x (d+1)
  if (problem.ridge > 0.0 && problem.dim() > 1) {
    grad.rightCols(problem.dim() - 1) -=
        2.0 * problem.ridge * coeffs.rightCols(problem.dim() - 1);
  }
  grad.row(0).setZero();  // reference class is not a free coordinate
  return grad;
}

WmlSolution wml_fit(const WmlProblem& problem, const WmlConfig& config) {
  const Index K = problem.num_classes();
  const Index m = problem.dim();
  const Index free_classes = K - 1;
  const Index n_free = free_classes * m;

  MatrixXd coeffs = config.init ? *config.init : MatrixXd::Zero(K, m);
  check_problem(problem, coeffs);
  coeffs.row(0).setZero();

  const VectorXd row_weight = problem.weights.rowwise().sum();
  double objective = wml_objective(problem, coeffs);
  MatrixXd grad = wml_gradient(problem, coeffs);
  double grad_norm = grad.lpNorm<Eigen::Infinity>();
  std::vector<double> objective_trace{objective};

  // Damped Newton: the curvature matrix gains a Levenberg-style mu I whenever
  // a step fails the Armijo test, so ill-conditioned subproblems degrade
  // gracefully toward scaled gradient ascent instead of stalling.
  double mu = 0.0;
  int iter = 0;
  for (; iter < config.max_iter && grad_norm > config.tol; ++iter) {
    // Hessian of the free block, negated so it is positive semidefinite.
    MatrixXd probs = problem.design * coeffs.transpose();
    softmax_rows_in_place(probs);
    MatrixXd neg_hess = MatrixXd::Zero(n_free, n_free);
    for (Index a = 1; a < K; ++a) {
      for (Index b = a; b < K; ++b) {
        VectorXd s;
        if (a == b) {
          s = row_weight.array() * probs.col(a).array() * (1.0 - probs.col(a).array());
        } else {
          s = -row_weight.array() * probs.col(a).array() * probs.col(b).array();
        }
        MatrixXd block =
            problem.design.transpose() * s.asDiagonal() * problem.design;
        neg_hess.block((a - 1) * m, (b - 1) * m, m, m) = block;
        if (a != b) neg_hess.block((b - 1) * m, (a - 1) * m, m, m) = block.transpose();
      }
    }
    if (problem.ridge > 0.0 && m > 1) {
      for (Index a = 0; a < free_classes; ++a) {
        neg_hess.block(a * m + 1, a * m + 1, m - 1, m - 1).diagonal().array() +=
            2.0 * problem.ridge;
      }
    }
    const double curvature_scale = std::max(neg_hess.diagonal().maxCoeff(), 1e-12);

    VectorXd grad_vec(n_free);
    for (Index a = 1; a < K; ++a) grad_vec.segment((a - 1) * m, m) = grad.row(a);

    bool stepped = false;
    for (int attempt = 0; attempt < 30 && !stepped; ++attempt) {
      MatrixXd damped = neg_hess;
      if (mu > 0.0) damped.diagonal().array() += mu;
      Eigen::LDLT<MatrixXd> ldlt(damped);
      VectorXd step_vec;
      bool usable = ldlt.info() == Eigen::Success;
      if (usable) {
        step_vec = ldlt.solve(grad_vec);
        usable = step_vec.allFinite() && grad_vec.dot(step_vec) > 0.0;
      }
      if (!usable) {
        mu = mu == 0.0 ? 1e-8 * curvature_scale : mu * 10.0;
        continue;
      }

      const double slope = grad_vec.dot(step_vec);
      MatrixXd direction = MatrixXd::Zero(K, m);
      for (Index a = 1; a < K; ++a) direction.row(a) = step_vec.segment((a - 1) * m, m);

      if (slope <= 1e-11 * (1.0 + std::abs(objective))) {
        // Quadratic tail: the predicted gain drowns in objective rounding, so
        // certify the full step by gradient reduction instead of ascent.
        const MatrixXd candidate = coeffs + direction;
        const double cand_obj = wml_objective(problem, candidate);
        const MatrixXd cand_grad = wml_gradient(problem, candidate);
        const double cand_norm = cand_grad.lpNorm<Eigen::Infinity>();
        if (std::isfinite(cand_obj) && cand_grad.allFinite() &&
            cand_norm <= 0.9 * grad_norm) {
          coeffs = candidate;
          objective = cand_obj;
          stepped = true;
        } else {
          mu = mu == 0.0 ? 1e-8 * curvature_scale : mu * 10.0;
        }
        continue;
      }

      double t = 1.0;
      for (int halving = 0; halving < 40 && !stepped; ++halving) {
        const MatrixXd candidate = coeffs + t * direction;
        const double cand_obj = wml_objective(problem, candidate);
        if (std::isfinite(cand_obj) && cand_obj >= objective + 1e-4 * t * slope) {
          coeffs = candidate;
          objective = cand_obj;
          stepped = true;
          if (t == 1.0) mu *= 0.25;
          if (mu < 1e-14 * curvature_scale) mu = 0.0;
        }
        t *= 0.5;
      }
      if (!stepped) mu = mu == 0.0 ? 1e-8 * curvature_scale : mu * 10.0;
    }
    if (!stepped) break;  // gains below float noise at every damping; report below

    objective_trace.push_back(objective);
    grad = wml_gradient(problem, coeffs);
    grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (coeffs.lpNorm<Eigen::Infinity>() > 1e10) {
      throw SolveError("wml: coefficients diverged (separable data without ridge?)",
                       coeffs, grad_norm);
    }
  }

  if (grad_norm > config.tol) {
    throw SolveError("wml: no convergence after " + std::to_string(iter) +
                         " iterations (grad_norm=" + std::to_string(grad_norm) + ")",
                     coeffs, grad_norm);
  }

  WmlSolution solution;
  solution.coeffs = std::move(coeffs);
  solution.final_objective = objective;
  solution.iterations = iter;
  solution.grad_norm = grad_norm;
  solution.objective_trace = std::move(objective_trace);
  return solution;
}

}  // namespace npel
