#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "npel/datagen.hpp"
#include "npel/numeric.hpp"
#include "test_support.hpp"

using namespace npel;
using namespace npel::testing;

namespace {

double gaussian_log_density(const VectorXd& x, const VectorXd& mu, const MatrixXd& cov) {
  const Eigen::LLT<MatrixXd> llt(cov);
  const VectorXd diff = x - mu;
  const VectorXd solved = llt.solve(diff);
  double log_det = 0.0;
  for (Index i = 0; i < cov.rows(); ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (diff.dot(solved) + log_det +
                 static_cast<double>(cov.rows()) * std::log(2.0 * std::numbers::pi));
}

}  // namespace

TEST_CASE("sample_clean draws from the stated families") {
  SUBCASE("gaussian class means land inside the CLT band") {
    const ScenarioSpec spec = case_a();
    Rng rng(1);
    const Sample sample = sample_clean(spec, 20000, rng);
    const auto& g = std::get<GaussianFamily>(spec.family);
    for (Index k = 0; k < 2; ++k) {
      VectorXd mean = VectorXd::Zero(3);
      double count = 0;
      for (Index i = 0; i < sample.y.size(); ++i) {
        if (sample.y(i) == k) {
          mean += sample.x.row(i).transpose();
          count += 1;
        }
      }
      mean /= count;
      const double band = 4.0 * std::sqrt(2.0 / count);  // diagonal variance 2
      CHECK((mean - g.means[static_cast<std::size_t>(k)]).lpNorm<Eigen::Infinity>() <=
            band);
    }
  }

  SUBCASE("fixed counts are exact and uniform circles respect their support") {
    const ScenarioSpec spec = case_b();
    Rng rng(2);
    const Sample sample = sample_clean(spec, 1001, rng);
    Index n0 = 0;
    const auto& u = std::get<UniformCircleFamily>(spec.family);
    for (Index i = 0; i < sample.y.size(); ++i) {
      if (sample.y(i) == 0) ++n0;
      const VectorXd center = u.centers[static_cast<std::size_t>(sample.y(i))];
      CHECK((sample.x.row(i).transpose() - center).norm() <= u.radius);
    }
    CHECK(n0 == 501);  // largest remainder puts the extra draw on class 0
  }

  SUBCASE("student-t draws have heavier tails than the matching gaussian") {
    const ScenarioSpec spec = case_c();
    Rng rng(3);
    const Sample sample = sample_clean(spec, 40000, rng);
    // Sample covariance of class 0 approximates shape * dof/(dof-2).
    const auto& t = std::get<StudentTFamily>(spec.family);
    MatrixXd cov = MatrixXd::Zero(3, 3);
    VectorXd mean = VectorXd::Zero(3);
    double count = 0;
    for (Index i = 0; i < sample.y.size(); ++i) {
      if (sample.y(i) != 0) continue;
      mean += sample.x.row(i).transpose();
      count += 1;
    }
    mean /= count;
    for (Index i = 0; i < sample.y.size(); ++i) {
      if (sample.y(i) != 0) continue;
      const VectorXd d = sample.x.row(i).transpose() - mean;
      cov += d * d.transpose();
    }
    cov /= count - 1;
    const MatrixXd expected = t.shape * (15.0 / 13.0);
    CHECK((cov - expected).lpNorm<Eigen::Infinity>() <= 0.15);
  }
}

TEST_CASE("inject_noise") {
  SUBCASE("eta zero leaves labels untouched with the identity transition") {
    ScenarioSpec spec = case_ma(0.0);
    Rng rng(5);
    const Sample clean = sample_clean(spec, 300, rng);
    const NoisySample noisy = inject_noise(spec, clean, rng);
    CHECK(noisy.y_noisy == clean.y);
    CHECK(noisy.truth.T.isApprox(MatrixXd::Identity(3, 3)));
    CHECK(noisy.x == clean.x);
  }

  SUBCASE("transition flips keep features bit-exact") {
    ScenarioSpec spec = case_ma(0.2);
    Rng rng(6);
    const Sample clean = sample_clean(spec, 500, rng);
    const NoisySample noisy = inject_noise(spec, clean, rng);
    CHECK(noisy.x == clean.x);
    CHECK(noisy.y_true == clean.y);
  }

  SUBCASE("pure confusion rows separate the classes exactly") {
    const ScenarioSpec spec = case_a(1.0, 0.0);  // m0 = 1, m1 = 0
    Rng rng(7);
    const Sample slots = sample_clean(spec, 400, rng);
    const NoisySample noisy = inject_noise(spec, slots, rng);
    CHECK(noisy.y_true == noisy.y_noisy);
    CHECK(noisy.truth.T.isApprox(MatrixXd::Identity(2, 2)));
  }

  SUBCASE("empirical flip rates converge to the generating transition") {
    ScenarioSpec spec = case_ma(0.1);
    Rng rng(8);
    const Sample clean = sample_clean(spec, 30000, rng);
    const NoisySample noisy = inject_noise(spec, clean, rng);
    MatrixXd counts = MatrixXd::Zero(3, 3);
    VectorXd col = VectorXd::Zero(3);
    for (Index i = 0; i < clean.y.size(); ++i) {
      counts(noisy.y_noisy(i), clean.y(i)) += 1.0;
      col(clean.y(i)) += 1.0;
    }
    for (Index k = 0; k < 3; ++k) counts.col(k) /= col(k);
    CHECK((counts - spec.transition_matrix()).lpNorm<Eigen::Infinity>() <= 0.01);
  }

  SUBCASE("confusion-row generation matches the dual noise matrices") {
    const ScenarioSpec spec = case_a(0.9, 0.1);
    Rng rng(9);
    const Sample slots = sample_clean(spec, 40000, rng);
    const NoisySample noisy = inject_noise(spec, slots, rng);
    // w = M' w_tilde; empirical true-label frequencies should match.
    VectorXd freq = VectorXd::Zero(2);
    for (Index i = 0; i < noisy.y_true.size(); ++i) freq(noisy.y_true(i)) += 1.0;
    freq /= static_cast<double>(noisy.y_true.size());
    CHECK((freq - noisy.truth.w).lpNorm<Eigen::Infinity>() <= 0.01);
    CHECK(noisy.truth.M(0, 0) == doctest::Approx(0.9));
  }

  SUBCASE("probabilities outside the unit interval are rejected") {
    ScenarioSpec spec = case_ma(1.7);
    Rng rng(10);
    const Sample clean = sample_clean(spec, 100, rng);
    CHECK_THROWS_AS(inject_noise(spec, clean, rng), ValidationError);
  }
}

TEST_CASE("oracle tilt parameters") {
  SUBCASE("coinciding means give the zero tilt") {
    GaussianFamily g;
    g.means = {VectorXd::Ones(2), VectorXd::Ones(2)};
    g.cov = MatrixXd::Identity(2, 2) * 1.7;
    ScenarioSpec spec;
    spec.family = std::move(g);
    spec.class_probs = VectorXd::Constant(2, 0.5);
    const OracleDrm oracle = oracle_drm_params(spec);
    CHECK(oracle.gamma.isZero(1e-14));
    CHECK(oracle.beta.isZero(1e-14));
  }

  SUBCASE("shared toeplitz covariance solves the linear system") {
    const ScenarioSpec spec = case_a();
    const OracleDrm oracle = oracle_drm_params(spec);
    CHECK(oracle.required_basis == Basis::Kind::identity);
    // Independent oracle: the 3x3 system solved with a plain inverse.
    const MatrixXd inv = toeplitz_cov().inverse();
    const VectorXd beta_expected = inv * VectorXd::Ones(3);
    CHECK((oracle.beta.row(1).transpose() - beta_expected).lpNorm<Eigen::Infinity>() <=
          1e-12);
    CHECK(oracle.gamma(1) ==
          doctest::Approx(-0.5 * VectorXd::Ones(3).dot(beta_expected)).epsilon(1e-12));
  }

  SUBCASE("the tilt equals the density ratio pointwise") {
    for (const ScenarioSpec& spec : {case_a(), case_mc(0.1)}) {
      const OracleDrm oracle = oracle_drm_params(spec);
      const auto& g = std::get<GaussianFamily>(spec.family);
      const Basis basis = oracle.required_basis == Basis::Kind::identity
                              ? Basis::identity(g.means[0].size())
                              : Basis::quadratic_diagonal(g.means[0].size());
      Rng rng(11);
      for (int trial = 0; trial < 100; ++trial) {
        const VectorXd x = 2.0 * rng.normal_vector(g.means[0].size());
        const RowVectorXd gx = basis.expand_row(x.transpose());
        for (std::size_t k = 1; k < g.means.size(); ++k) {
          const MatrixXd& cov_k = g.covs.empty() ? g.cov : g.covs[k];
          const MatrixXd& cov_0 = g.covs.empty() ? g.cov : g.covs[0];
          const double log_ratio = gaussian_log_density(x, g.means[k], cov_k) -
                                   gaussian_log_density(x, g.means[0], cov_0);
          const double tilt = oracle.gamma(static_cast<Index>(k)) +
                              oracle.beta.row(static_cast<Index>(k)).dot(gx);
          CHECK(std::abs(tilt - log_ratio) <=
                1e-8 * std::max(1.0, std::abs(log_ratio)));
        }
      }
    }
  }

  SUBCASE("case (c) quadratic block carries the variance contrast") {
    const ScenarioSpec spec = case_mc(0.1);
    const OracleDrm oracle = oracle_drm_params(spec);
    CHECK(oracle.required_basis == Basis::Kind::quadratic_diagonal);
    for (Index k = 1; k < 3; ++k) {
      const double expected = 0.5 * (1.0 - 1.0 / static_cast<double>(k + 1));
      for (Index j = 5; j < 10; ++j) {
        CHECK(oracle.beta(k, j) == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }

  SUBCASE("unsupported families are refused") {
    CHECK_THROWS_AS(oracle_drm_params(case_b()), ValidationError);
    ScenarioSpec nonspherical = case_mc(0.1);
    std::get<GaussianFamily>(nonspherical.family).covs[1](0, 1) = 0.3;
    CHECK_THROWS_AS(oracle_drm_params(nonspherical), ValidationError);
  }
}

TEST_CASE("oracle parameters drive the posterior to the Bayes posterior") {
  const ScenarioSpec spec = case_a();
  const OracleDrm oracle = oracle_drm_params(spec);
  ModelParams params;
  params.w = spec.class_probs;
  params.gamma = oracle.gamma;
  params.beta = oracle.beta;
  params.T = MatrixXd::Identity(2, 2);

  const auto& g = std::get<GaussianFamily>(spec.family);

  // At the class-0 mean the posterior is dominated by class 0.
  const VectorXd at_mu0 = posterior(params, g.means[0]);
  CHECK(at_mu0(0) > 0.5);

  // And it matches the Bayes posterior from the Gaussian densities pointwise.
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const VectorXd x = 2.0 * rng.normal_vector(3);
    VectorXd bayes(2);
    for (Index k = 0; k < 2; ++k) {
      bayes(k) = std::log(spec.class_probs(k)) +
                 gaussian_log_density(x, g.means[static_cast<std::size_t>(k)], g.cov);
    }
    bayes = (bayes.array() - bayes.maxCoeff()).exp();
    bayes /= bayes.sum();
    CHECK((posterior(params, x) - bayes).lpNorm<Eigen::Infinity>() <= 1e-10);
  }
}

TEST_CASE("posterior link between clean and noisy posteriors") {
  const ScenarioSpec spec = case_ma(0.15);
  const OracleDrm oracle = oracle_drm_params(spec);
  ModelParams params;
  params.w = spec.class_probs;
  params.gamma = oracle.gamma;
  params.beta = oracle.beta;
  params.T = spec.transition_matrix();

  const auto& g = std::get<GaussianFamily>(spec.family);
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const VectorXd x = 2.0 * rng.normal_vector(5);
    const VectorXd pi = posterior(params, x);

    // Noisy posterior from the generative mixture densities directly.
    const NoiseMatrices nm = complete_noise_matrices(params.T, params.w);
    VectorXd noisy(3);
    for (Index l = 0; l < 3; ++l) {
      double mass = 0.0;
      for (Index k = 0; k < 3; ++k) {
        mass += nm.M(l, k) * std::exp(gaussian_log_density(x, g.means[static_cast<std::size_t>(k)], g.cov));
      }
      noisy(l) = nm.w_tilde(l) * mass;
    }
    noisy /= noisy.sum();

    const VectorXd linked = params.T * pi;
    CHECK((noisy - linked).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("scenario json loads and generates") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "npel_scenario.json";
  {
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    REQUIRE(f != nullptr);
    std::fputs(R"({
      "name": "toy",
      "family": {"kind": "gaussian", "means": [[0,0],[1,1]], "cov": [[1,0],[0,1]]},
      "class_probs": [0.5, 0.5],
      "fixed_counts": true,
      "noise": {"kind": "confusion_rows", "m": [0.9, 0.1]},
      "basis": "identity",
      "eval": {"per_class": 500}
    })",
               f);
    std::fclose(f);
  }
  const ScenarioSpec spec = load_scenario(path.string());
  fs::remove(path);
  CHECK(spec.num_classes() == 2);
  CHECK(spec.eval_per_class == 500);
  CHECK(std::holds_alternative<ConfusionRowsNoise>(spec.noise));

  Rng rng(14);
  const Sample sample = sample_clean(spec, 100, rng);
  const NoisySample noisy = inject_noise(spec, sample, rng);
  CHECK(noisy.truth.M(0, 0) == doctest::Approx(0.9));
}
