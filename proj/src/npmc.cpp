#include "npel/npmc.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "npel/numeric.hpp"
#include "npel/rng.hpp"

namespace npel {

namespace {

std::vector<Index> sorted_constrained(const NpmcSpec& spec) {
  return {spec.constrained.begin(), spec.constrained.end()};  // std::set is ordered
}

// Per-class score multipliers c_k for a given multiplier vector.
VectorXd coefficient_vector(const NpmcSpec& spec, const VectorXd& lambda,
                            const VectorXd& w) {
  const Index K = w.size();
  VectorXd c(K);
  for (Index k = 0; k < K; ++k) c(k) = spec.rho(k) / w(k);
  Index j = 0;
  for (Index k : spec.constrained) {
    c(k) += lambda(j) / w(k);
    ++j;
  }
  return c;
}

}  // namespace

double coefficient(const NpmcSpec& spec, const VectorXd& lambda, const VectorXd& w,
                   Index k) {
  if (w(k) <= 0.0) throw ValidationError("npmc: zero class proportion");
  double numer = spec.rho(k);
  const std::vector<Index> s = sorted_constrained(spec);
  for (Index j = 0; j < static_cast<Index>(s.size()); ++j) {
    if (s[static_cast<std::size_t>(j)] == k) numer += lambda(j);
  }
  return numer / w(k);
}

double dual_objective_from_posteriors(const NpmcSpec& spec, const MatrixXd& posteriors,
                                      const VectorXd& w, const VectorXd& lambda) {
  if ((w.array() <= 0.0).any()) throw ValidationError("npmc: zero class proportion");
  const Index n = posteriors.rows();
  const VectorXd c = coefficient_vector(spec, lambda, w);
  double realized = 0.0;
  for (Index i = 0; i < n; ++i) {
    realized += (posteriors.row(i).transpose().array() * c.array()).maxCoeff();
  }
  double value = -realized / static_cast<double>(n) + spec.rho.sum();
  Index j = 0;
  for (Index k : spec.constrained) {
    value += lambda(j) * (1.0 - spec.alpha.at(k));
    ++j;
  }
  return value;
}

double dual_objective(const NpmcSpec& spec, const ModelParams& params,
                      const Dataset& data, const VectorXd& lambda) {
  spec.validate(params.num_classes());
  if ((lambda.array() < 0.0).any()) throw ValidationError("npmc: negative multiplier");
  return dual_objective_from_posteriors(
      spec, posterior_matrix(params, data.basis_view), params.w, lambda);
}

namespace {

VectorXd clip_to_box(VectorXd v, double hi) {
  return v.cwiseMax(0.0).cwiseMin(hi);
}

struct SingleSearch {
  VectorXd x;
  double fx;
  long evals = 0;
  bool truncated = false;
};

SingleSearch search_from(const std::function<double(const VectorXd&)>& f,
                         VectorXd start, const HjConfig& config, long budget,
                         Rng& rng) {
  SingleSearch s;
  s.x = std::move(start);
  s.fx = f(s.x);
  s.evals = 1;

  VectorXd center = s.x;  // exploration origin; drifts ahead on pattern moves
  double f_center = s.fx;
  double step = config.init_step;

  while (s.evals < budget) {
    // Exploratory sweep: sequential coordinate probes of the current step.
    VectorXd probe = center;
    double f_probe = f_center;
    for (Index c = 0; c < probe.size() && s.evals < budget; ++c) {
      for (const double sign : {+1.0, -1.0}) {
        VectorXd trial = probe;
        trial(c) = std::clamp(trial(c) + sign * step, 0.0, config.box_hi);
        if (trial(c) == probe(c)) continue;
        const double ft = f(trial);
        ++s.evals;
        if (ft > f_probe) {
          f_probe = ft;
          probe = trial;
          break;  // keep the first improving sign for this coordinate
        }
      }
    }
    if (f_probe <= s.fx && probe.size() > 1) {
      // Axis probes stalled: piecewise-linear objectives form grooves whose
      // ascent cone contains no axis direction. Pairwise diagonal probes
      // escape the common ones.
      for (Index a = 0; a < probe.size() && f_probe <= s.fx; ++a) {
        for (Index b = a + 1; b < probe.size() && f_probe <= s.fx; ++b) {
          for (const double sa : {+1.0, -1.0}) {
            for (const double sb : {+1.0, -1.0}) {
              if (s.evals >= budget) break;
              VectorXd trial = center;
              trial(a) = std::clamp(trial(a) + sa * step, 0.0, config.box_hi);
              trial(b) = std::clamp(trial(b) + sb * step, 0.0, config.box_hi);
              if ((trial.array() == center.array()).all()) continue;
              const double ft = f(trial);
              ++s.evals;
              if (ft > f_probe) {
                f_probe = ft;
                probe = trial;
              }
            }
          }
        }
      }
      // Narrow grooves dodge the fixed probe set; seeded random directions
      // cover the rest of the cone.
      for (int draw = 0; draw < 8 && f_probe <= s.fx && s.evals < budget; ++draw) {
        VectorXd u = rng.normal_vector(probe.size());
        const double norm = u.norm();
        if (norm == 0.0) continue;
        VectorXd trial = clip_to_box(center + (step / norm) * u, config.box_hi);
        if ((trial.array() == center.array()).all()) continue;
        const double ft = f(trial);
        ++s.evals;
        if (ft > f_probe) {
          f_probe = ft;
          probe = trial;
        }
      }
    }

    if (f_probe > s.fx) {
      // Pattern move: extrapolate past the new best and explore from there.
      VectorXd pattern = clip_to_box(2.0 * probe - s.x, config.box_hi);
      s.x = probe;
      s.fx = f_probe;
      center = std::move(pattern);
      f_center = f(center);
      ++s.evals;
    } else if ((center.array() != s.x.array()).any()) {
      center = s.x;  // abandoned pattern trajectory; retry around the best point
      f_center = s.fx;
    } else {
      // Exploration at the best point failed. The step ladder ends with one
      // round at exactly tol_step so the result is tol_step-stationary.
      if (step == config.tol_step) return s;
      step *= config.shrink;
      if (step < config.tol_step) step = config.tol_step;
    }
  }
  s.truncated = true;
  return s;
}

}  // namespace

HjResult hooke_jeeves_max(const std::function<double(const VectorXd&)>& f, Index dim,
                          const HjConfig& config) {
  if (dim < 1) throw ValidationError("hooke-jeeves: need at least one coordinate");

  std::vector<VectorXd> starts;
  starts.push_back(VectorXd::Zero(dim));
  if (config.n_starts > 1) starts.push_back(VectorXd::Constant(dim, config.box_hi));
  if (config.n_starts > 2) starts.push_back(VectorXd::Constant(dim, config.box_hi / 2.0));
  Rng rng(derive_seed(config.seed, 0x47));
  while (static_cast<int>(starts.size()) < config.n_starts) {
    VectorXd s(dim);
    for (Index c = 0; c < dim; ++c) s(c) = rng.uniform(0.0, config.box_hi);
    starts.push_back(std::move(s));
  }

  HjResult result;
  bool first = true;
  for (std::size_t start_idx = 0; start_idx < starts.size(); ++start_idx) {
    const VectorXd& start = starts[start_idx];
    Rng probe_rng(derive_seed(config.seed, 0x48, start_idx));
    const long budget = std::max<long>(1, config.max_evals - result.evals);
    SingleSearch s = search_from(f, start, config, budget, probe_rng);
    result.evals += s.evals;
    result.truncated = result.truncated || s.truncated;
    if (first || s.fx > result.value) {
      result.value = s.fx;
      result.argmax = s.x;
      first = false;
    }
    if (result.evals >= config.max_evals) {
      result.truncated = true;
      break;
    }
  }
  return result;
}

NpmcClassifier npmc_from_params(const ModelParams& params, const Dataset& data,
                                const NpmcSpec& spec, const HjConfig& hj_config,
                                double feas_margin) {
  spec.validate(params.num_classes());
  NpmcClassifier clf;
  clf.spec = spec;
  clf.params = params;
  clf.lambda_hat.box_hi = hj_config.box_hi;

  const Index dim = static_cast<Index>(spec.constrained.size());
  if (dim == 0) {
    clf.lambda_hat.lambda = VectorXd();
    clf.lambda_hat.g_value = dual_objective_from_posteriors(
        spec, posterior_matrix(params, data.basis_view), params.w, VectorXd());
    clf.feasibility = Feasibility::feasible;  // nothing to violate
    return clf;
  }

  const MatrixXd posteriors = posterior_matrix(params, data.basis_view);
  const auto objective = [&](const VectorXd& lambda) {
    return dual_objective_from_posteriors(spec, posteriors, params.w, lambda);
  };
  HjResult hj = hooke_jeeves_max(objective, dim, hj_config);
  clf.lambda_hat.lambda = hj.argmax;
  clf.lambda_hat.g_value = hj.value;
  clf.feasibility = hj.value >= spec.rho.sum() - feas_margin
                        ? Feasibility::suspect_infeasible
                        : Feasibility::feasible;
  return clf;
}

NpmcClassifier fit_npmc(const Dataset& data, const NpmcSpec& spec,
                        const EmConfig& em_config, const HjConfig& hj_config,
                        double feas_margin) {
  EmResult fit = em_fit(data, data.num_classes, em_config);
  return npmc_from_params(fit.params, data, spec, hj_config, feas_margin);
}

Index classify_npmc(const NpmcClassifier& clf, const VectorXd& gx) {
  const VectorXd c = coefficient_vector(clf.spec, clf.lambda_hat.lambda, clf.params.w);
  const VectorXd scores = posterior(clf.params, gx).cwiseProduct(c);
  Index best = 0;
  for (Index k = 1; k < scores.size(); ++k) {
    if (scores(k) > scores(best)) best = k;  // strict: ties keep the smaller index
  }
  return best;
}

VectorXi classify_npmc_all(const NpmcClassifier& clf, const MatrixXd& basis_view) {
  const VectorXd c = coefficient_vector(clf.spec, clf.lambda_hat.lambda, clf.params.w);
  const MatrixXd post = posterior_matrix(clf.params, basis_view);
  VectorXi out(basis_view.rows());
  for (Index i = 0; i < basis_view.rows(); ++i) {
    Index best = 0;
    double best_score = post(i, 0) * c(0);
    for (Index k = 1; k < c.size(); ++k) {
      const double score = post(i, k) * c(k);
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    out(i) = static_cast<int>(best);
  }
  return out;
}

}  // namespace npel
