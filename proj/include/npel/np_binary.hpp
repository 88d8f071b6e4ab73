#pragma once

#include "npel/em.hpp"
#include "npel/model.hpp"

namespace npel {

/// Plug-in binary classifier with type-I error control: density-ratio score
/// threshold lambda_hat, equivalently a posterior threshold
/// t* = lambda w / (1 - w + lambda w). lambda_hat = +inf is the saturating
/// "always predict 0" sentinel.
struct BinaryNpClassifier {
  double lambda_hat = 1.0;
  double w_hat = 0.5;  // P(Y = 1)
  double alpha = 0.05;
  ModelParams params;  // K = 2

  double posterior_threshold() const {
    return lambda_hat * w_hat / (1.0 - w_hat + lambda_hat * w_hat);
  }
};

/// r = {(1-w) pi} / {w (1-pi)}; saturates to +-inf at pi in {0,1} with the
/// ordering preserved.
double density_ratio_score(double pi, double w);

/// Smallest jump point lambda in {r_i} with
/// n^{-1} sum_i (1 - pi_i) 1{lambda <= r_i} <= alpha (1 - w_hat); +inf when no
/// jump point satisfies the constraint. Posteriors are clamped to
/// [1e-12, 1 - 1e-12] before scoring.
double solve_threshold(const VectorXd& pis, double w_hat, double alpha);

/// 1 iff pi_hat(gx) >= t*, with equality predicting 1.
int classify_binary(const BinaryNpClassifier& clf, const VectorXd& gx);

/// Batch classification of an n x d basis view.
VectorXi classify_binary_all(const BinaryNpClassifier& clf, const MatrixXd& basis_view);

/// em_fit + threshold solve on the training sample.
BinaryNpClassifier fit_np_binary(const Dataset& data, double alpha,
                                 const EmConfig& em_config);

/// Threshold solve around an already-fitted posterior model (used for the
/// vanilla and oracle baselines, where params comes from a plain logistic fit).
BinaryNpClassifier np_binary_from_params(const ModelParams& params,
                                         const Dataset& data, double alpha);

}  // namespace npel
