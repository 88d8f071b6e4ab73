#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "npel/npmc.hpp"
#include "npel/wml.hpp"
#include "npel/numeric.hpp"
#include "npel/rng.hpp"
#include "test_support.hpp"

using namespace npel;
using namespace npel::testing;

namespace {

NpmcSpec spec_a() {
  NpmcSpec spec;
  spec.rho = VectorXd::Zero(3);
  spec.rho(2) = 1.0;
  spec.constrained = {0, 1};
  spec.alpha = {{0, 0.10}, {1, 0.15}};
  return spec;
}

MatrixXd random_posteriors(Index n, Index K, Rng& rng) {
  MatrixXd post(n, K);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < K; ++k) post(i, k) = rng.uniform(0.01, 1.0);
    post.row(i) /= post.row(i).sum();
  }
  return post;
}

VectorXd class_errors_helper(const NpmcClassifier& clf, const Sample& eval) {
  const VectorXi pred = classify_npmc_all(clf, eval.x);
  VectorXd wrong = VectorXd::Zero(3), total = VectorXd::Zero(3);
  for (Index i = 0; i < eval.y.size(); ++i) {
    total(eval.y(i)) += 1;
    if (pred(i) != eval.y(i)) wrong(eval.y(i)) += 1;
  }
  return wrong.cwiseQuotient(total);
}

// Concave piecewise-affine test function: minimum of affine pieces.
struct PiecewiseAffine {
  std::vector<double> intercepts;
  std::vector<VectorXd> slopes;

  double operator()(const VectorXd& lambda) const {
    double value = kPosInf;
    for (std::size_t j = 0; j < intercepts.size(); ++j) {
      value = std::min(value, intercepts[j] + slopes[j].dot(lambda));
    }
    return value;
  }
};

}  // namespace

TEST_CASE("coefficient closed form") {
  VectorXd w(2);
  w << 0.5, 0.3;

  NpmcSpec unconstrained;
  unconstrained.rho = VectorXd::Ones(2);
  CHECK(coefficient(unconstrained, VectorXd(), w, 0) == doctest::Approx(2.0));

  NpmcSpec constrained;
  constrained.rho = VectorXd::Zero(2);
  constrained.rho(0) = 1.0;
  constrained.constrained = {1};
  constrained.alpha = {{1, 0.1}};
  VectorXd lambda(1);
  lambda << 3.0;
  CHECK(coefficient(constrained, lambda, w, 1) == doctest::Approx(10.0));

  lambda << 0.0;
  CHECK(coefficient(constrained, lambda, w, 1) == doctest::Approx(0.0));
  CHECK(coefficient(constrained, lambda, w, 0) == doctest::Approx(2.0));
}

TEST_CASE("dual objective") {
  SUBCASE("hand value on a single sample") {
    MatrixXd post(1, 2);
    post << 1.0, 0.0;
    VectorXd w(2);
    w << 0.5, 0.5;
    NpmcSpec spec;
    spec.rho = VectorXd::Zero(2);
    spec.rho(1) = 1.0;
    spec.constrained = {0};
    spec.alpha = {{0, 0.1}};
    VectorXd lambda(1);
    lambda << 1.0;
    CHECK(dual_objective_from_posteriors(spec, post, w, lambda) ==
          doctest::Approx(-0.1).epsilon(1e-12));
  }

  SUBCASE("empty constraint set reduces to the weighted plug-in value") {
    Rng rng(5);
    const MatrixXd post = random_posteriors(100, 3, rng);
    VectorXd w(3);
    w << 0.3, 0.3, 0.4;
    NpmcSpec spec;
    spec.rho = VectorXd::Ones(3);
    double realized = 0.0;
    for (Index i = 0; i < 100; ++i) {
      realized += (post.row(i).transpose().array() / w.array()).maxCoeff();
    }
    CHECK(dual_objective_from_posteriors(spec, post, w, VectorXd()) ==
          doctest::Approx(3.0 - realized / 100.0).epsilon(1e-12));
  }

  SUBCASE("dataset overload agrees with the posterior-matrix form") {
    const ScenarioSpec scenario = case_ma(0.1);
    const TrainDraw train = draw_training(scenario, 400, 12);
    ModelParams params = ModelParams::neutral(3, 5);
    params.gamma(1) = 0.2;
    params.beta.row(1).setConstant(0.3);
    params.beta.row(2).setConstant(-0.1);
    VectorXd lambda(2);
    lambda << 1.5, 0.7;
    const NpmcSpec spec = spec_a();
    const double via_dataset = dual_objective(spec, params, train.noisy, lambda);
    const double via_posteriors = dual_objective_from_posteriors(
        spec, posterior_matrix(params, train.noisy.basis_view), params.w, lambda);
    CHECK(via_dataset == via_posteriors);
    CHECK_THROWS_AS(dual_objective(spec, params, train.noisy, -lambda), ValidationError);
  }

  SUBCASE("midpoint concavity holds to float precision") {
    Rng rng(7);
    const MatrixXd post = random_posteriors(300, 3, rng);
    VectorXd w(3);
    w << 0.25, 0.35, 0.4;
    const NpmcSpec spec = spec_a();
    for (int pair = 0; pair < 200; ++pair) {
      VectorXd a(2), b(2);
      for (Index c = 0; c < 2; ++c) {
        a(c) = rng.uniform(0.0, 200.0);
        b(c) = rng.uniform(0.0, 200.0);
      }
      const double mid = dual_objective_from_posteriors(spec, post, w, (a + b) / 2.0);
      const double ga = dual_objective_from_posteriors(spec, post, w, a);
      const double gb = dual_objective_from_posteriors(spec, post, w, b);
      CHECK(mid >= 0.5 * (ga + gb) - 1e-9);
    }
  }
}

TEST_CASE("hooke-jeeves pattern search") {
  HjConfig config;
  config.seed = 4;

  SUBCASE("known quadratic maximum") {
    VectorXd target(2);
    target << 3.0, 4.0;
    const auto f = [&](const VectorXd& lambda) {
      return -(lambda - target).squaredNorm();
    };
    const HjResult result = hooke_jeeves_max(f, 2, config);
    CHECK((result.argmax - target).lpNorm<Eigen::Infinity>() <= 1e-3);
    CHECK_FALSE(result.truncated);
  }

  SUBCASE("boundary maximum clips to zero") {
    const auto f = [](const VectorXd& lambda) { return -lambda(0); };
    const HjResult result = hooke_jeeves_max(f, 2, config);
    CHECK(result.argmax(0) <= config.tol_step);
  }

  SUBCASE("concave piecewise-affine functions beat a fine grid oracle") {
    Rng rng(99);
    HjConfig small = config;
    small.box_hi = 10.0;
    small.init_step = 1.0;
    for (int trial = 0; trial < 5; ++trial) {
      PiecewiseAffine f;
      for (int j = 0; j < 5; ++j) {
        f.intercepts.push_back(rng.uniform(0.0, 5.0));
        VectorXd slope(2);
        slope << rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5);
        f.slopes.push_back(slope);
      }
      const auto fn = [&](const VectorXd& lambda) { return f(lambda); };
      const HjResult result = hooke_jeeves_max(fn, 2, small);

      double grid_best = -kPosInf;
      VectorXd probe(2);
      for (double x = 0.0; x <= 10.0 + 1e-12; x += 0.05) {
        for (double y = 0.0; y <= 10.0 + 1e-12; y += 0.05) {
          probe << x, y;
          grid_best = std::max(grid_best, f(probe));
        }
      }
      CHECK(result.value >= grid_best - 10.0 * small.tol_step);

      // Post-hoc pattern-search stationarity at the returned point.
      for (Index c = 0; c < 2; ++c) {
        for (const double sign : {+1.0, -1.0}) {
          VectorXd trial_pt = result.argmax;
          trial_pt(c) = std::clamp(trial_pt(c) + sign * small.tol_step, 0.0, small.box_hi);
          CHECK(f(trial_pt) <= result.value + 1e-12);
        }
      }
    }
  }

  SUBCASE("eval budget exhaustion sets the truncation flag") {
    HjConfig tiny = config;
    tiny.max_evals = 10;
    const auto f = [](const VectorXd& lambda) { return -lambda.squaredNorm(); };
    const HjResult result = hooke_jeeves_max(f, 2, tiny);
    CHECK(result.truncated);
    CHECK(result.evals <= 10 + 6);  // at most one sweep beyond the budget
  }
}

TEST_CASE("classify_npmc") {
  NpmcClassifier clf;
  clf.params = ModelParams::neutral(3, 2);
  clf.spec.rho = VectorXd::Ones(3);
  clf.spec.constrained = {0};
  clf.spec.alpha = {{0, 0.1}};
  clf.lambda_hat.lambda = VectorXd::Zero(1);

  VectorXd gx(2);
  gx << 0.0, 0.0;

  SUBCASE("equal scores resolve to the smallest class index") {
    CHECK(classify_npmc(clf, gx) == 0);
  }

  SUBCASE("a huge multiplier forces the constrained class") {
    clf.lambda_hat.lambda << 1e6;
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
      const VectorXd point = rng.normal_vector(2);
      CHECK(classify_npmc(clf, point) == 0);
    }
  }

  SUBCASE("scaling every coefficient leaves predictions unchanged") {
    Rng rng(8);
    ModelParams params = ModelParams::neutral(3, 2);
    params.gamma(1) = 0.3;
    params.gamma(2) = -0.2;
    params.beta.row(1) << 1.0, -0.5;
    params.beta.row(2) << -0.7, 0.9;
    clf.params = params;
    clf.lambda_hat.lambda << 2.5;

    NpmcClassifier scaled = clf;
    scaled.spec.rho *= 4.0;
    scaled.lambda_hat.lambda *= 4.0;
    for (int i = 0; i < 200; ++i) {
      const VectorXd point = rng.normal_vector(2);
      CHECK(classify_npmc(clf, point) == classify_npmc(scaled, point));
    }
  }
}

TEST_CASE("fit_npmc on the three-class Gaussian design") {
  const ScenarioSpec scenario = case_ma(0.1);
  const TrainDraw train = draw_training(scenario, 5000, 31337);

  EmConfig em;
  em.seed = 21;
  em.n_restarts = 3;
  HjConfig hj;
  hj.seed = 22;

  const NpmcClassifier clf = fit_npmc(train.noisy, *scenario.npmc, em, hj);
  CHECK(clf.feasibility == Feasibility::feasible);

  Rng eval_rng(5150);
  const Sample eval = sample_clean(scenario, 20000, eval_rng);
  const VectorXi pred = classify_npmc_all(clf, eval.x);

  VectorXd wrong = VectorXd::Zero(3), total = VectorXd::Zero(3);
  for (Index i = 0; i < eval.y.size(); ++i) {
    total(eval.y(i)) += 1;
    if (pred(i) != eval.y(i)) wrong(eval.y(i)) += 1;
  }
  const VectorXd errors = wrong.cwiseQuotient(total);
  CHECK(std::abs(errors(0) - 0.10) <= 0.04);
  CHECK(std::abs(errors(1) - 0.15) <= 0.04);
  CHECK(errors(2) >= 0.02);
  CHECK(errors(2) <= 0.07);

  SUBCASE("dual value and realized classification are consistent on every sample") {
    const MatrixXd post = posterior_matrix(clf.params, train.noisy.basis_view);
    const VectorXi train_pred = classify_npmc_all(clf, train.noisy.basis_view);
    VectorXd c(3);
    for (Index k = 0; k < 3; ++k) {
      c(k) = coefficient(clf.spec, clf.lambda_hat.lambda, clf.params.w, k);
    }
    double realized = 0.0;
    for (Index i = 0; i < post.rows(); ++i) realized += c(train_pred(i)) * post(i, train_pred(i));
    double expected = clf.spec.rho.sum() - realized / static_cast<double>(post.rows());
    Index j = 0;
    for (Index k : clf.spec.constrained) {
      expected += clf.lambda_hat.lambda(j) * (1.0 - clf.spec.alpha.at(k));
      ++j;
    }
    CHECK(clf.lambda_hat.g_value == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("fit_npmc with an empty constraint set is the weighted plug-in rule") {
  const ScenarioSpec scenario = case_ma(0.05);
  const TrainDraw train = draw_training(scenario, 1500, 2020);

  NpmcSpec spec;
  spec.rho.resize(3);
  spec.rho << 0.2, 0.3, 0.5;

  EmConfig em;
  em.seed = 2;
  em.n_restarts = 2;
  const NpmcClassifier clf = fit_npmc(train.noisy, spec, em, HjConfig{});
  CHECK(clf.lambda_hat.lambda.size() == 0);

  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    const VectorXd point = rng.normal_vector(5);
    const VectorXd post = posterior(clf.params, point);
    Index best = 0;
    double best_score = -1.0;
    for (Index k = 0; k < 3; ++k) {
      const double score = spec.rho(k) * post(k) / clf.params.w(k);
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    CHECK(classify_npmc(clf, point) == best);
  }
}

TEST_CASE("fit_npmc on clean data matches the clean-label pipeline") {
  ScenarioSpec scenario = case_ma(0.0);  // zero noise: T = I injected
  const TrainDraw train = draw_training(scenario, 4000, 616);

  EmConfig em;
  em.seed = 14;
  em.n_restarts = 2;
  HjConfig hj;
  hj.seed = 15;

  // "Ours" on noise-free data against the same dual fed the clean labels
  // through a plain posterior fit.
  const NpmcClassifier ours = fit_npmc(train.noisy, *scenario.npmc, em, hj);

  const Dataset clean(train.noisy.features, train.y_true, 3,
                      Basis::identity(5));
  MatrixXd hard = MatrixXd::Zero(clean.n(), 3);
  VectorXd freq = VectorXd::Zero(3);
  for (Index i = 0; i < clean.n(); ++i) {
    hard(i, clean.labels(i)) = 1.0;
    freq(clean.labels(i)) += 1.0;
  }
  freq /= static_cast<double>(clean.n());
  WmlProblem problem = WmlProblem::from_basis(clean.basis_view, hard, 1e-6);
  WmlConfig wml_config;
  wml_config.tol = 1e-8 * static_cast<double>(clean.n());
  const WmlSolution solution = wml_fit(problem, wml_config);
  ModelParams plain;
  plain.w = freq;
  plain.gamma.resize(3);
  plain.gamma(0) = 0.0;
  for (Index k = 1; k < 3; ++k) {
    plain.gamma(k) = solution.coeffs(k, 0) - std::log(freq(k) / freq(0));
  }
  plain.beta = solution.coeffs.rightCols(5);
  plain.beta.row(0).setZero();
  plain.T = MatrixXd::Identity(3, 3);
  const NpmcClassifier oracle = npmc_from_params(plain, clean, *scenario.npmc, hj);

  Rng eval_rng(717);
  const Sample eval = sample_clean(scenario, 20000, eval_rng);
  const VectorXd ours_err = class_errors_helper(ours, eval);
  const VectorXd oracle_err = class_errors_helper(oracle, eval);
  CHECK((ours_err - oracle_err).lpNorm<Eigen::Infinity>() <= 0.02);
}

TEST_CASE("fit_npmc predictions are invariant to consistent feature permutation") {
  const ScenarioSpec scenario = case_ma(0.1);
  const TrainDraw train = draw_training(scenario, 1200, 888);

  EmConfig em;
  em.seed = 9;
  em.n_restarts = 2;
  HjConfig hj;
  hj.seed = 10;

  const NpmcClassifier clf = fit_npmc(train.noisy, *scenario.npmc, em, hj);

  // Reverse the feature columns at train and test time.
  MatrixXd x_perm = train.noisy.features.rowwise().reverse();
  const Dataset permuted(x_perm, train.noisy.labels, 3, Basis::identity(5));
  const NpmcClassifier clf_perm = fit_npmc(permuted, *scenario.npmc, em, hj);

  Rng eval_rng(303);
  const Sample eval = sample_clean(scenario, 2000, eval_rng);
  const VectorXi pred = classify_npmc_all(clf, eval.x);
  const VectorXi pred_perm = classify_npmc_all(clf_perm, eval.x.rowwise().reverse());
  CHECK(pred == pred_perm);
}
