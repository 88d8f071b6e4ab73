#include "npel/umbrella.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "npel/numeric.hpp"
#include "npel/rng.hpp"
#include "npel/wml.hpp"

namespace npel {

namespace {

// log P(Binomial(m, a) >= k) via a stable tail sum of log pmfs.
double log_binomial_survival(Index k, Index m, double a,
                             const std::vector<double>& log_choose) {
  if (a <= 0.0) return kNegInf;
  if (a >= 1.0) return 0.0;
  const double la = std::log(a);
  const double l1a = std::log1p(-a);
  double best = kNegInf;
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(m - k + 1));
  for (Index j = k; j <= m; ++j) {
    const double t = log_choose[static_cast<std::size_t>(j)] +
                     static_cast<double>(j) * la + static_cast<double>(m - j) * l1a;
    terms.push_back(t);
    best = std::max(best, t);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - best);
  return best + std::log(sum);
}

std::vector<double> make_log_choose(Index m) {
  std::vector<double> lc(static_cast<std::size_t>(m) + 1);
  for (Index j = 0; j <= m; ++j) {
    lc[static_cast<std::size_t>(j)] = std::lgamma(static_cast<double>(m) + 1.0) -
                                      std::lgamma(static_cast<double>(j) + 1.0) -
                                      std::lgamma(static_cast<double>(m - j) + 1.0);
  }
  return lc;
}

}  // namespace

double binomial_alpha(Index k, Index m, double delta) {
  if (delta <= 0.0 || delta >= 1.0) throw ValidationError("umbrella: delta outside (0,1)");
  if (k < 1 || k > m) throw ValidationError("umbrella: need 1 <= k <= m");
  const std::vector<double> log_choose = make_log_choose(m);
  const double log_delta = std::log(delta);
  // The survival function is continuous and strictly increasing in a.
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (log_binomial_survival(k, m, mid, log_choose) < log_delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

namespace {

double ecdf(const VectorXd& scores, double t) {
  Index count = 0;
  for (Index i = 0; i < scores.size(); ++i) {
    if (scores(i) <= t) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(scores.size());
}

}  // namespace

double d_hat(double t, const VectorXd& est0_scores, const VectorXd& est1_scores,
             double m0, double m1) {
  if (m0 <= m1) throw ValidationError("umbrella: need m0 > m1");
  if (est0_scores.size() == 0 || est1_scores.size() == 0) {
    throw ValidationError("umbrella: empty estimation split");
  }
  return (1.0 - m0) / (m0 - m1) * (ecdf(est0_scores, t) - ecdf(est1_scores, t));
}

int UmbrellaClassifier::classify(const RowVectorXd& x) const {
  return score(x)(0) > threshold ? 1 : 0;
}

VectorXi UmbrellaClassifier::classify_all(const MatrixXd& x) const {
  const VectorXd s = score(x);
  VectorXi out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) out(i) = s(i) > threshold ? 1 : 0;
  return out;
}

namespace {

struct Splits {
  std::vector<Index> train0, est0, cal0;
  std::vector<Index> train1, est1;
};

std::vector<Index> class_indices(const VectorXi& labels, int label) {
  std::vector<Index> out;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == label) out.push_back(i);
  }
  return out;
}

Splits make_splits(const Dataset& data, const UmbrellaConfig& config) {
  if (std::abs(config.split0_train + config.split0_est + config.split0_cal - 1.0) > 1e-9 ||
      config.split0_train <= 0.0 || config.split0_est <= 0.0 || config.split0_cal <= 0.0) {
    throw ValidationError("umbrella: class-0 split fractions must be positive and sum to 1");
  }
  if (std::abs(config.split1_train + config.split1_est - 1.0) > 1e-9 ||
      config.split1_train <= 0.0 || config.split1_est <= 0.0) {
    throw ValidationError("umbrella: class-1 split fractions must be positive and sum to 1");
  }

  Rng rng(derive_seed(config.seed, 0x5f));
  std::vector<Index> idx0 = class_indices(data.labels, 0);
  std::vector<Index> idx1 = class_indices(data.labels, 1);
  if (idx0.size() < 3 || idx1.size() < 2) {
    throw ValidationError("umbrella: too few samples to partition");
  }

  const auto shuffle = [&rng](std::vector<Index>& v) {
    const std::vector<Index> perm = rng.permutation(static_cast<Index>(v.size()));
    std::vector<Index> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[static_cast<std::size_t>(perm[i])];
    v = std::move(out);
  };
  shuffle(idx0);
  shuffle(idx1);

  Splits s;
  const auto n0 = static_cast<double>(idx0.size());
  Index n_train0 = std::max<Index>(1, static_cast<Index>(std::floor(config.split0_train * n0)));
  Index n_est0 = std::max<Index>(1, static_cast<Index>(std::floor(config.split0_est * n0)));
  if (n_train0 + n_est0 >= static_cast<Index>(idx0.size())) {
    throw ValidationError("umbrella: class-0 calibration split is empty");
  }
  s.train0.assign(idx0.begin(), idx0.begin() + n_train0);
  s.est0.assign(idx0.begin() + n_train0, idx0.begin() + n_train0 + n_est0);
  s.cal0.assign(idx0.begin() + n_train0 + n_est0, idx0.end());

  const auto n1 = static_cast<double>(idx1.size());
  Index n_train1 = std::max<Index>(1, static_cast<Index>(std::floor(config.split1_train * n1)));
  if (n_train1 >= static_cast<Index>(idx1.size())) {
    throw ValidationError("umbrella: class-1 estimation split is empty");
  }
  s.train1.assign(idx1.begin(), idx1.begin() + n_train1);
  s.est1.assign(idx1.begin() + n_train1, idx1.end());
  return s;
}

MatrixXd gather_rows(const MatrixXd& x, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

}  // namespace

UmbrellaClassifier fit_umbrella(const Dataset& data, const ScoreTrainer& trainer,
                                const UmbrellaConfig& config, const EmConfig& em_config) {
  if (data.num_classes != 2) throw ValidationError("umbrella: need a K = 2 dataset");
  if (config.delta <= 0.0 || config.delta >= 1.0) {
    throw ValidationError("umbrella: delta outside (0,1)");
  }
  if (config.alpha <= 0.0 || config.alpha >= 1.0) {
    throw ValidationError("umbrella: alpha outside (0,1)");
  }

  double m0 = 1.0;
  double m1 = 0.0;
  if (config.corruption) {
    m0 = config.corruption->m0;
    m1 = config.corruption->m1;
  } else {
    const EmResult fit = em_fit(data, 2, em_config);
    const NoiseMatrices nm = complete_noise_matrices(fit.params.T, fit.params.w);
    m0 = nm.M(0, 0);
    m1 = nm.M(1, 0);
  }
  if (m0 <= m1) {
    throw ValidationError("umbrella: corruption estimates violate m0 > m1");
  }

  const Splits s = make_splits(data, config);

  std::vector<Index> train_rows = s.train0;
  train_rows.insert(train_rows.end(), s.train1.begin(), s.train1.end());
  MatrixXd train_x = gather_rows(data.features, train_rows);
  VectorXi train_y(static_cast<Index>(train_rows.size()));
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    train_y(static_cast<Index>(i)) = data.labels(train_rows[i]);
  }

  UmbrellaClassifier clf;
  clf.score = trainer(train_x, train_y);
  clf.m0_used = m0;
  clf.m1_used = m1;

  VectorXd cal = clf.score(gather_rows(data.features, s.cal0));
  std::sort(cal.begin(), cal.end());
  const VectorXd est0 = clf.score(gather_rows(data.features, s.est0));
  const VectorXd est1 = clf.score(gather_rows(data.features, s.est1));

  const Index m = cal.size();
  clf.cal_size = m;
  // For threshold T_(k), the corrupted type-I error stays below
  // u_k = 1 - a with P(Binomial(m, a) >= k) = delta, with probability
  // >= 1 - delta; the correction D-hat transfers the bound to clean labels.
  Index k_star = m;
  bool found = false;
  for (Index k = 1; k <= m; ++k) {
    const double u_k = 1.0 - binomial_alpha(k, m, config.delta);
    const double correction = std::max(d_hat(cal(k - 1), est0, est1, m0, m1), 0.0);
    if (u_k - correction <= config.alpha) {
      k_star = k;
      found = true;
      break;
    }
  }
  clf.k_star = k_star;
  clf.saturated = !found;
  clf.threshold = cal(k_star - 1);
  return clf;
}

UmbrellaClassifier fit_umbrella(const Dataset& data, const UmbrellaConfig& config,
                                const EmConfig& em_config) {
  const Basis basis = data.basis;
  ModelParams shared_params;
  const ScoreTrainer default_trainer = [basis, &shared_params](
                                           const MatrixXd& x, const VectorXi& y) {
    const MatrixXd view = basis.expand(x);
    MatrixXd hard = MatrixXd::Zero(x.rows(), 2);
    VectorXd freq = VectorXd::Zero(2);
    for (Index i = 0; i < y.size(); ++i) {
      hard(i, y(i)) = 1.0;
      freq(y(i)) += 1.0;
    }
    freq /= static_cast<double>(y.size());
    if ((freq.array() == 0.0).any()) {
      throw ValidationError("umbrella: a training split lost one class entirely");
    }

    WmlProblem problem = WmlProblem::from_basis(view, std::move(hard), 1e-4);
    WmlConfig wml_config;
    wml_config.tol = 1e-8 * std::max<double>(1.0, static_cast<double>(x.rows()));
    WmlSolution solution = wml_fit(problem, wml_config);

    ModelParams params;
    params.w = freq;
    params.gamma.resize(2);
    params.gamma << 0.0, solution.coeffs(1, 0) - std::log(freq(1) / freq(0));
    params.beta = solution.coeffs.rightCols(view.cols());
    params.beta.row(0).setZero();
    params.T = MatrixXd::Identity(2, 2);
    shared_params = params;

    return [params, basis](const MatrixXd& features) {
      return VectorXd(posterior_matrix(params, basis.expand(features)).col(1));
    };
  };

  UmbrellaClassifier clf = fit_umbrella(data, default_trainer, config, em_config);
  clf.score_params = shared_params;
  return clf;
}

}  // namespace npel
