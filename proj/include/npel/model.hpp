#pragma once

#include <map>
#include <set>
#include <vector>

#include "npel/types.hpp"

namespace npel {

/// Feature representation g(x). identity keeps x as-is (d = p);
/// quadratic_diagonal appends elementwise squares (d = 2p); custom_table is a
/// precomputed n x d matrix tied to one specific dataset by row count.
struct Basis {
  enum class Kind { identity, quadratic_diagonal, custom_table };

  Kind kind = Kind::identity;
  Index input_dim = 0;   // p
  Index output_dim = 0;  // d
  MatrixXd table;        // only for custom_table

  static Basis identity(Index p) { return {Kind::identity, p, p, {}}; }
  static Basis quadratic_diagonal(Index p) {
    return {Kind::quadratic_diagonal, p, 2 * p, {}};
  }
  static Basis custom_table(MatrixXd table_in) {
    Basis b{Kind::custom_table, 0, table_in.cols(), std::move(table_in)};
    return b;
  }

  /// Apply the basis to an n x p feature matrix.
  MatrixXd expand(const MatrixXd& x) const;
  /// Apply the basis to a single feature row.
  RowVectorXd expand_row(const RowVectorXd& x) const;
};

/// Observed sample: features, noisy integer labels in [0, K), and the
/// basis-expanded view computed once at construction.
struct Dataset {
  MatrixXd features;    // n x p
  VectorXi labels;      // n, noisy labels
  Index num_classes;    // K
  Basis basis;
  MatrixXd basis_view;  // n x d

  Dataset(MatrixXd features_in, VectorXi labels_in, Index num_classes_in,
          Basis basis_in);

  Index n() const { return features.rows(); }
  Index p() const { return features.cols(); }
  Index d() const { return basis_view.cols(); }
};

/// All estimable parameters of the noisy-label density ratio model.
/// T is column-stochastic with T(l, k) = P(noisy = l | clean = k); class 0 is
/// the reference class, so gamma(0) = 0 and beta.row(0) = 0.
struct ModelParams {
  VectorXd w;      // K, clean class proportions
  VectorXd gamma;  // K, tilt intercepts
  MatrixXd beta;   // K x d, tilt slopes
  MatrixXd T;      // K x K, column-stochastic transition matrix

  Index num_classes() const { return w.size(); }
  Index basis_dim() const { return beta.cols(); }

  /// Identity-noise model with uniform class proportions and zero tilts.
  static ModelParams neutral(Index num_classes, Index basis_dim);
};

void validate(const ModelParams& params, Index num_classes, Index basis_dim);

/// The transition/confusion pair with both marginals; entries satisfy the
/// marginal and duality links exactly by construction.
struct NoiseMatrices {
  MatrixXd T;        // K x K column-stochastic, T(l,k) = P(noisy=l|clean=k)
  MatrixXd M;        // K x K row-stochastic,   M(l,k) = P(clean=k|noisy=l)
  VectorXd w;        // clean class proportions
  VectorXd w_tilde;  // noisy class proportions
};

/// Complete (T, w) into the full pair; fails if some noisy class has zero mass.
NoiseMatrices complete_noise_matrices(const MatrixXd& T, const VectorXd& w);

/// The dual completion from (M, w_tilde); fails on a zero clean-class mass.
NoiseMatrices complete_from_confusion(const MatrixXd& M, const VectorXd& w_tilde);

/// Posterior P(Y = k | g(x)) under the fitted tilts, softmax with
/// max-subtraction. Requires all w_k > 0.
VectorXd posterior(const ModelParams& params, const VectorXd& gx);

/// Posterior rows for every row of an n x d basis view.
MatrixXd posterior_matrix(const ModelParams& params, const MatrixXd& basis_view);

/// Error-control problem definition: objective weights rho, per-class targets
/// alpha for the constrained classes S.
struct NpmcSpec {
  VectorXd rho;                   // K, nonnegative, at least one positive
  std::map<Index, double> alpha;  // class -> target level in (0,1), keys = S
  std::set<Index> constrained;    // S

  void validate(Index num_classes) const;
};

/// Empirical-likelihood point masses and their Lagrange multipliers.
/// nu is indexed over the non-reference classes 1..K-1.
struct ProfileWeights {
  VectorXd p;      // n, nonnegative, sums to 1
  VectorXd log_p;  // n, kept alongside to avoid underflow in log-EL sums
  VectorXd nu;     // K-1
};

}  // namespace npel
