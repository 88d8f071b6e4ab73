#include "npel/em.hpp"

#include <cmath>
#include <sstream>

#include "npel/numeric.hpp"
#include "npel/rng.hpp"
#include "npel/wml.hpp"

namespace npel {

namespace {

constexpr double kMinLatentMass = 1e-8;

// Purpose tags for seed derivation; restart index enters as the rep argument.
constexpr std::uint64_t kSeedPurposeInit = 0x11;

// Shared E-step core: tilt_logits = basis_view * beta' (n x K).
ResponsibilityMatrix e_step_impl(const MatrixXd& tilt_logits, const ModelParams& params,
                                 const VectorXi& labels) {
  const Index n = tilt_logits.rows();
  const Index K = params.num_classes();
  const MatrixXd log_T = params.T.array().log();
  const VectorXd log_w = params.w.array().log();

  MatrixXd logits = tilt_logits;
  logits.rowwise() += (params.gamma + log_w).transpose();
  for (Index i = 0; i < n; ++i) logits.row(i) += log_T.row(labels(i));

  ResponsibilityMatrix out;
  out.omega.resize(n, K);
  for (Index i = 0; i < n; ++i) {
    const double m = logits.row(i).maxCoeff();
    if (!std::isfinite(m)) {
      std::ostringstream msg;
      msg << "e-step: sample " << i << " (noisy label " << labels(i)
          << ") has zero posterior mass under the current T and w";
      throw ValidationError(msg.str());
    }
    out.omega.row(i) = (logits.row(i).array() - m).exp();
    out.omega.row(i) /= out.omega.row(i).sum();
  }
  out.col_means = out.omega.colwise().mean();
  return out;
}

ProfileWeights profile_weights_impl(const MatrixXd& tilt_logits,
                                    const ModelParams& params,
                                    const VectorXd& col_means) {
  const Index n = tilt_logits.rows();
  const Index K = params.num_classes();
  MatrixXd logits = tilt_logits;
  logits.rowwise() += (params.gamma + col_means.array().log().matrix()).transpose();

  ProfileWeights pw;
  pw.log_p.resize(n);
  const double log_n = std::log(static_cast<double>(n));
  for (Index i = 0; i < n; ++i) pw.log_p(i) = -log_n - log_sum_exp(logits.row(i));
  pw.p = pw.log_p.array().exp();
  pw.nu = col_means.tail(K - 1);
  return pw;
}

double profile_log_el_impl(const MatrixXd& tilt_logits, const ModelParams& params,
                           const VectorXi& labels, const VectorXd& log_p) {
  const Index n = tilt_logits.rows();
  const MatrixXd log_T = params.T.array().log();
  const VectorXd log_w = params.w.array().log();

  MatrixXd logits = tilt_logits;
  logits.rowwise() += (params.gamma + log_w).transpose();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double lse = log_sum_exp((logits.row(i) + log_T.row(labels(i))).eval());
    if (!std::isfinite(lse)) return kNegInf;
    total += lse;
  }
  return total + log_p.sum();
}

}  // namespace

ResponsibilityMatrix e_step(const ModelParams& params, const Dataset& data) {
  return e_step_impl(data.basis_view * params.beta.transpose(), params, data.labels);
}

VectorXd m_step_w(const ResponsibilityMatrix& omega) { return omega.col_means; }

MatrixXd m_step_T(const ResponsibilityMatrix& omega, const VectorXi& noisy_labels,
                  const TUpdate& mode) {
  const Index n = omega.omega.rows();
  const Index K = omega.omega.cols();
  if (noisy_labels.size() != n) throw ValidationError("m-step T: label count mismatch");

  // counts(l, k) = sum_i 1{y_i = l} omega_ik
  MatrixXd counts = MatrixXd::Zero(K, K);
  for (Index i = 0; i < n; ++i) counts.row(noisy_labels(i)) += omega.omega.row(i);
  const VectorXd col_mass = counts.colwise().sum();
  for (Index k = 0; k < K; ++k) {
    if (col_mass(k) <= 0.0) {
      std::ostringstream msg;
      msg << "m-step T: latent class " << k << " has zero responsibility mass";
      throw ValidationError(msg.str());
    }
  }

  MatrixXd T(K, K);
  switch (mode.mode) {
    case TUpdate::Mode::plain: {
      for (Index k = 0; k < K; ++k) T.col(k) = counts.col(k) / col_mass(k);
      break;
    }
    case TUpdate::Mode::constrained: {
      if (mode.xi.size() != K) throw ValidationError("m-step T: xi has wrong length");
      if ((mode.xi.array() < 0.0).any() || (mode.xi.array() > 1.0).any()) {
        throw ValidationError("m-step T: xi outside [0,1]");
      }
      for (Index k = 0; k < K; ++k) {
        const double plain_diag = counts(k, k) / col_mass(k);
        if (plain_diag >= mode.xi(k)) {
          T.col(k) = counts.col(k) / col_mass(k);
          continue;
        }
        const double xi = mode.xi(k);
        if (xi >= 1.0) {
          throw ValidationError("m-step T: active constraint with xi = 1 is singular");
        }
        const double kappa = (counts(k, k) - xi * col_mass(k)) / (xi * (xi - 1.0));
        for (Index l = 0; l < K; ++l) {
          const double denom = col_mass(k) + kappa * (xi - (l == k ? 1.0 : 0.0));
          T(l, k) = counts(l, k) / denom;
        }
        T(k, k) = xi;  // exact by construction; avoids rounding drift
      }
      break;
    }
    case TUpdate::Mode::penalized: {
      if (mode.eta_pen.size() != K) throw ValidationError("m-step T: eta has wrong length");
      if ((mode.eta_pen.array() < 0.0).any()) {
        throw ValidationError("m-step T: negative penalty weight");
      }
      for (Index k = 0; k < K; ++k) {
        for (Index l = 0; l < K; ++l) {
          T(l, k) = (counts(l, k) + (l == k ? mode.eta_pen(k) : 0.0)) /
                    (col_mass(k) + mode.eta_pen(k));
        }
      }
      break;
    }
  }
  return T;
}

namespace {

TiltUpdate tilt_update_impl(const ResponsibilityMatrix& omega, const Dataset& data,
                            double ridge, const MatrixXd* warm_start, double tol) {
  const Index K = omega.omega.cols();
  for (Index k = 0; k < K; ++k) {
    if (omega.col_means(k) <= 0.0) {
      throw ValidationError("m-step tilt: latent class with zero mass");
    }
  }

  WmlProblem problem = WmlProblem::from_basis(data.basis_view, omega.omega, ridge);
  WmlConfig config;
  config.tol = tol;
  config.max_iter = 300;
  if (warm_start) config.init = *warm_start;
  WmlSolution solution;
  try {
    solution = wml_fit(problem, config);
  } catch (const SolveError&) {
    if (!warm_start) throw;
    // A warm start parked on a saturated softmax plateau can stall the
    // damped Newton iteration; the cold-started solve is reliable there.
    config.init.reset();
    solution = wml_fit(problem, config);
  }

  TiltUpdate tilt;
  tilt.gamma.resize(K);
  tilt.gamma(0) = 0.0;
  for (Index k = 1; k < K; ++k) {
    tilt.gamma(k) = solution.coeffs(k, 0) -
                    std::log(omega.col_means(k) / omega.col_means(0));
  }
  tilt.beta = solution.coeffs.rightCols(data.d());
  tilt.beta.row(0).setZero();
  tilt.wml_coeffs = std::move(solution.coeffs);
  return tilt;
}

double default_tilt_tol(Index n) {
  // Flat (near-separable) tilt directions turn gradient slack into objective
  // slack quadratically; this keeps the profile log-EL trace monotone at the
  // 1e-8 level even when the smallest curvature is ~1e-5.
  return 1e-10 * std::max<double>(1.0, static_cast<double>(n));
}

}  // namespace

TiltUpdate m_step_tilt(const ResponsibilityMatrix& omega, const Dataset& data,
                       double ridge, const MatrixXd* warm_start) {
  return tilt_update_impl(omega, data, ridge, warm_start, default_tilt_tol(data.n()));
}

ProfileWeights profile_weights(const ModelParams& params,
                               const ResponsibilityMatrix& omega_prev,
                               const Dataset& data) {
  return profile_weights_impl(data.basis_view * params.beta.transpose(), params,
                              omega_prev.col_means);
}

double profile_log_el(const ModelParams& params, const ProfileWeights& weights,
                      const Dataset& data) {
  return profile_log_el_impl(data.basis_view * params.beta.transpose(), params,
                             data.labels, weights.log_p);
}

namespace {

VectorXd label_frequencies(const VectorXi& labels, Index K) {
  VectorXd freq = VectorXd::Zero(K);
  for (Index i = 0; i < labels.size(); ++i) freq(labels(i)) += 1.0;
  return freq / static_cast<double>(labels.size());
}

// Clamp the diagonal up to the constrained lower bounds, shrinking the rest of
// each column proportionally; keeps iteration-1 monotonicity when the random
// initializer starts outside the feasible set.
void project_to_constraint(MatrixXd& T, const VectorXd& xi) {
  for (Index k = 0; k < T.cols(); ++k) {
    if (T(k, k) >= xi(k)) continue;
    const double rest = 1.0 - T(k, k);
    const double scale = rest > 0.0 ? (1.0 - xi(k)) / rest : 0.0;
    for (Index l = 0; l < T.rows(); ++l) {
      if (l != k) T(l, k) *= scale;
    }
    T(k, k) = xi(k);
  }
}

struct RestartOutcome {
  ModelParams params;
  ProfileWeights weights;
  EmTrace trace;
  double final_logel = kNegInf;
  bool usable = false;
  std::string failure;
};

double diagonal_penalty(const MatrixXd& T, const TUpdate& mode) {
  if (mode.mode != TUpdate::Mode::penalized) return 0.0;
  double total = 0.0;
  for (Index k = 0; k < T.cols(); ++k) {
    if (mode.eta_pen(k) > 0.0) total += mode.eta_pen(k) * std::log(T(k, k));
  }
  return total;
}

RestartOutcome run_restart(const Dataset& data, Index K, const EmConfig& config,
                           ModelParams params) {
  RestartOutcome outcome;
  try {
    validate(params, K, data.d());
    if (config.t_update.mode == TUpdate::Mode::constrained) {
      project_to_constraint(params.T, config.t_update.xi);
    }

    MatrixXd tilt_logits = data.basis_view * params.beta.transpose();
    MatrixXd warm_coeffs;
    double previous = kNegInf;
    ResponsibilityMatrix omega;

    for (int iter = 0; iter < config.max_iter; ++iter) {
      omega = e_step_impl(tilt_logits, params, data.labels);
      if ((omega.col_means.array() < kMinLatentMass).any()) {
        throw ValidationError(
            "em: a latent class collapsed (responsibility mass < 1e-8)");
      }

      params.w = m_step_w(omega);
      params.T = m_step_T(omega, data.labels, config.t_update);
      TiltUpdate tilt = m_step_tilt(omega, data, config.ridge,
                                    warm_coeffs.size() ? &warm_coeffs : nullptr);
      params.gamma = std::move(tilt.gamma);
      params.beta = std::move(tilt.beta);
      warm_coeffs = std::move(tilt.wml_coeffs);
      validate(params, K, data.d());

      tilt_logits.noalias() = data.basis_view * params.beta.transpose();
      outcome.weights = profile_weights_impl(tilt_logits, params, omega.col_means);
      const double logel =
          profile_log_el_impl(tilt_logits, params, data.labels, outcome.weights.log_p) +
          diagonal_penalty(params.T, config.t_update);

      outcome.trace.profile_logel_per_iter.push_back(logel);
      outcome.trace.iterations = iter + 1;
      if (logel - previous < config.epsilon) {
        outcome.trace.converged = true;
        break;
      }
      previous = logel;
    }

    if (outcome.trace.converged) {
      // Best-effort polish of the final tilt solve: a 100x tighter target
      // shrinks solver slack in the reported parameters; ill-conditioned fits
      // that cannot reach it keep the converged iterate.
      try {
        TiltUpdate polish =
            tilt_update_impl(omega, data, config.ridge, &warm_coeffs,
                             1e-2 * default_tilt_tol(data.n()));
        params.gamma = std::move(polish.gamma);
        params.beta = std::move(polish.beta);
        validate(params, K, data.d());
        tilt_logits.noalias() = data.basis_view * params.beta.transpose();
        outcome.weights = profile_weights_impl(tilt_logits, params, omega.col_means);
        outcome.trace.profile_logel_per_iter.back() =
            profile_log_el_impl(tilt_logits, params, data.labels,
                                outcome.weights.log_p) +
            diagonal_penalty(params.T, config.t_update);
      } catch (const SolveError&) {
        // keep the unpolished parameters
      }
    }

    outcome.params = std::move(params);
    outcome.final_logel = outcome.trace.profile_logel_per_iter.back();
    outcome.usable = true;
  } catch (const std::runtime_error& err) {
    outcome.usable = false;
    outcome.failure = err.what();
  }
  return outcome;
}

}  // namespace

EmResult em_fit(const Dataset& data, Index num_classes, const EmConfig& config,
                const ModelParams* init) {
  if (config.n_restarts < 1) throw ValidationError("em: need at least one restart");
  if (config.epsilon <= 0.0) throw ValidationError("em: epsilon must be positive");
  if (num_classes != data.num_classes) {
    throw ValidationError("em: class count does not match dataset");
  }
  const Index K = num_classes;
  const VectorXd freq = label_frequencies(data.labels, K);

  // One shared tilt warm start: a single weighted logistic fit that treats the
  // noisy labels as hard responsibilities.
  VectorXd gamma0 = VectorXd::Zero(K);
  MatrixXd beta0 = MatrixXd::Zero(K, data.d());
  if ((freq.array() > 0.0).all()) {
    try {
      MatrixXd hard = MatrixXd::Zero(data.n(), K);
      for (Index i = 0; i < data.n(); ++i) hard(i, data.labels(i)) = 1.0;
      ResponsibilityMatrix hard_omega{std::move(hard), freq};
      TiltUpdate tilt = m_step_tilt(hard_omega, data,
                                    std::max(config.ridge, 1e-4), nullptr);
      gamma0 = std::move(tilt.gamma);
      beta0 = std::move(tilt.beta);
    } catch (const SolveError&) {
      // keep the zero tilt; restarts can still move away from it
    }
  }

  RestartOutcome best;
  bool have_best = false;
  std::string last_failure = "em: no restart produced a fit";
  EmTrace best_partial;

  for (int r = 0; r < config.n_restarts; ++r) {
    ModelParams start;
    if (r == 0 && init) {
      start = *init;
    } else {
      Rng rng(derive_seed(config.seed, kSeedPurposeInit, static_cast<std::uint64_t>(r)));
      const double u = rng.uniform(0.05, 0.3);
      start.w = freq;
      if ((start.w.array() <= 0.0).any()) {
        // guard against absent noisy classes in tiny samples
        start.w = (start.w.array() + 1.0 / static_cast<double>(data.n())).matrix();
        start.w /= start.w.sum();
      }
      start.T = MatrixXd::Constant(K, K, u / static_cast<double>(K));
      start.T.diagonal().array() += 1.0 - u;
      start.gamma = gamma0;
      start.beta = beta0;
    }

    RestartOutcome outcome = run_restart(data, K, config, std::move(start));
    if (!outcome.usable) {
      last_failure = outcome.failure;
      if (outcome.trace.profile_logel_per_iter.size() >
          best_partial.profile_logel_per_iter.size()) {
        best_partial = std::move(outcome.trace);
        best_partial.restart_index_of_best = r;
      }
      continue;
    }
    if (!have_best || outcome.final_logel > best.final_logel) {
      outcome.trace.restart_index_of_best = r;
      best = std::move(outcome);
      have_best = true;
    }
  }

  if (!have_best) throw EmError(last_failure, best_partial);

  EmResult result;
  result.params = std::move(best.params);
  result.weights = std::move(best.weights);
  result.trace = std::move(best.trace);
  return result;
}

}  // namespace npel
