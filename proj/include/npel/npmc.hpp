#pragma once

#include <functional>

#include "npel/em.hpp"
#include "npel/model.hpp"

namespace npel {

/// Lagrange multipliers over the constrained classes, in ascending class
/// order, clipped to [0, box_hi] per coordinate.
struct DualState {
  VectorXd lambda;
  double g_value = 0.0;
  double box_hi = 200.0;
};

enum class Feasibility { feasible, suspect_infeasible };

struct NpmcClassifier {
  DualState lambda_hat;
  NpmcSpec spec;
  ModelParams params;
  Feasibility feasibility = Feasibility::feasible;
};

struct HjConfig {
  double box_hi = 200.0;
  double init_step = 20.0;  // box_hi / 10
  double shrink = 0.5;
  double tol_step = 1e-4;
  long max_evals = 200000;
  int n_starts = 8;
  std::uint64_t seed = 0;
};

struct HjResult {
  VectorXd argmax;
  double value = 0.0;
  long evals = 0;
  bool truncated = false;  // max_evals hit before tol_step in some start
};

/// c_k(lambda, w) = {rho_k + lambda_k 1(k in S)} / w_k. lambda is indexed over
/// the constrained classes in ascending order.
double coefficient(const NpmcSpec& spec, const VectorXd& lambda, const VectorXd& w,
                   Index k);

/// Empirical dual objective
///   G(lambda) = -n^{-1} sum_i max_k c_k(lambda,w) pi_k(X_i)
///               + sum_k rho_k + sum_{k in S} lambda_k (1 - alpha_k).
double dual_objective(const NpmcSpec& spec, const ModelParams& params,
                      const Dataset& data, const VectorXd& lambda);

/// Same objective evaluated from precomputed posteriors (n x K) and w.
double dual_objective_from_posteriors(const NpmcSpec& spec, const MatrixXd& posteriors,
                                      const VectorXd& w, const VectorXd& lambda);

/// Classic pattern search on [0, box_hi]^dim: exploratory coordinate probes,
/// pattern moves on success, step shrinking on failure; best of n_starts
/// deterministic starts (origin, corner, center, seeded uniform draws).
HjResult hooke_jeeves_max(const std::function<double(const VectorXd&)>& f, Index dim,
                          const HjConfig& config);

/// em_fit, then maximize the empirical dual over the box and assemble the
/// plug-in classifier. Suspect infeasibility is flagged when the dual optimum
/// reaches sum_k rho_k - feas_margin.
NpmcClassifier fit_npmc(const Dataset& data, const NpmcSpec& spec,
                        const EmConfig& em_config, const HjConfig& hj_config,
                        double feas_margin = 1e-6);

/// Dual solve around an already-fitted posterior model (vanilla/oracle paths).
NpmcClassifier npmc_from_params(const ModelParams& params, const Dataset& data,
                                const NpmcSpec& spec, const HjConfig& hj_config,
                                double feas_margin = 1e-6);

/// argmax_k c_k(lambda_hat, w) pi_k(gx); ties resolve to the smallest index.
Index classify_npmc(const NpmcClassifier& clf, const VectorXd& gx);

VectorXi classify_npmc_all(const NpmcClassifier& clf, const MatrixXd& basis_view);

}  // namespace npel
