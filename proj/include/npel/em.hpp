#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "npel/model.hpp"

namespace npel {

/// Transition-matrix M-step variant: the plain closed form, the
/// lower-bounded form T_kk >= xi_k, or the diagonal-penalized form with
/// weights eta_pen.
struct TUpdate {
  enum class Mode { plain, constrained, penalized };

  Mode mode = Mode::plain;
  VectorXd xi;       // constrained: per-class diagonal lower bounds in [0,1]
  VectorXd eta_pen;  // penalized: per-class penalty weights >= 0

  static TUpdate plain() { return {}; }
  static TUpdate constrained(VectorXd xi) {
    return {Mode::constrained, std::move(xi), {}};
  }
  static TUpdate penalized(VectorXd eta) {
    return {Mode::penalized, {}, std::move(eta)};
  }
};

struct EmConfig {
  double epsilon = 1e-6;  // stop when the raw profile log-EL increment drops below
  int max_iter = 2000;
  int n_restarts = 5;
  std::uint64_t seed = 0;
  TUpdate t_update;
  double ridge = 0.0;  // forwarded to the inner weighted logistic solver
};

/// Per-sample posterior over true labels, the E-step output.
struct ResponsibilityMatrix {
  MatrixXd omega;      // n x K, rows on the simplex
  VectorXd col_means;  // K, omega_{.k} = mean_i omega_ik
};

/// Objective history of one EM run. In penalized mode the recorded objective
/// is the penalized profile log-EL (plain log-EL plus sum_k eta_k log T_kk),
/// which is the quantity the iteration ascends.
struct EmTrace {
  std::vector<double> profile_logel_per_iter;
  int iterations = 0;
  bool converged = false;
  int restart_index_of_best = 0;
};

struct EmResult {
  ModelParams params;
  ProfileWeights weights;
  EmTrace trace;
};

/// Raised when every restart aborts before producing a usable fit.
class EmError : public std::runtime_error {
 public:
  EmError(const std::string& what, EmTrace best_partial)
      : std::runtime_error(what), best_partial(std::move(best_partial)) {}

  EmTrace best_partial;
};

/// omega_ik proportional to exp(gamma_k + beta_k'g(X_i)) T(y_i,k) w_k,
/// normalized per row in log space. A row with no mass (T and w zero against
/// the observed label) raises a ValidationError naming the sample.
ResponsibilityMatrix e_step(const ModelParams& params, const Dataset& data);

VectorXd m_step_w(const ResponsibilityMatrix& omega);

MatrixXd m_step_T(const ResponsibilityMatrix& omega, const VectorXi& noisy_labels,
                  const TUpdate& mode);

struct TiltUpdate {
  VectorXd gamma;     // K, gamma(0) = 0
  MatrixXd beta;      // K x d, row 0 = 0
  MatrixXd wml_coeffs;  // K x (d+1) inner-solver iterate, reusable as warm start
};

/// Solves the weighted multinomial logistic subproblem and applies the
/// intercept adjustment gamma_k = gbar_k - log(omega_{.k}/omega_{.0}).
TiltUpdate m_step_tilt(const ResponsibilityMatrix& omega, const Dataset& data,
                       double ridge, const MatrixXd* warm_start = nullptr);

/// Point masses p_i = n^{-1} {sum_k omega_{.k} exp(gamma_k + beta_k'g(X_i))}^{-1}
/// and multipliers nu_k = omega_{.k} (k = 1..K-1), all in log space.
ProfileWeights profile_weights(const ModelParams& params,
                               const ResponsibilityMatrix& omega_prev,
                               const Dataset& data);

/// sum_i log sum_k w_k T(y_i,k) exp(gamma_k + beta_k'g(X_i)) + sum_i log p_i.
/// Returns -inf when some observation has zero modeled mass.
double profile_log_el(const ModelParams& params, const ProfileWeights& weights,
                      const Dataset& data);

/// Full EM over the profile empirical likelihood with random restarts; the
/// run with the highest final objective wins, ties broken by lowest restart
/// index. When init is given it replaces the random initialization of
/// restart 0. Deterministic given config.seed.
EmResult em_fit(const Dataset& data, Index num_classes, const EmConfig& config,
                const ModelParams* init = nullptr);

}  // namespace npel
