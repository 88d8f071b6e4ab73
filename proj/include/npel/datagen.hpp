#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "npel/model.hpp"
#include "npel/rng.hpp"

namespace npel {

/// Class-conditional feature families. Gaussian takes one shared covariance
/// or a per-class list; uniform_circle is the planar disc family;
/// student_t uses the shape-matrix (not covariance) convention.
struct GaussianFamily {
  std::vector<VectorXd> means;
  MatrixXd cov;                // shared covariance when covs is empty
  std::vector<MatrixXd> covs;  // optional per-class covariances
};

struct UniformCircleFamily {
  std::vector<VectorXd> centers;  // 2-D
  double radius = 1.0;
};

struct StudentTFamily {
  std::vector<VectorXd> means;
  MatrixXd shape;
  double dof = 15.0;
};

using Family = std::variant<GaussianFamily, UniformCircleFamily, StudentTFamily>;

/// Row-conditional corruption P(Y = . | noisy = l), one row per noisy class;
/// generation fixes the noisy-class counts and draws true labels per row.
struct ConfusionRowsNoise {
  MatrixXd rows;  // K x K row-stochastic
};

/// Symmetric transition noise: off-diagonal eta/K, diagonal 1 - (K-1) eta / K.
struct TransitionEtaNoise {
  double eta = 0.0;
};

using Noise = std::variant<std::monostate, ConfusionRowsNoise, TransitionEtaNoise>;

struct ScenarioSpec {
  std::string name;
  Family family;
  VectorXd class_probs;       // true-label marginal; noisy marginal for confusion rows
  bool fixed_counts = false;  // exact proportional counts instead of multinomial draws
  Noise noise;
  Basis::Kind basis_kind = Basis::Kind::identity;
  std::optional<NpmcSpec> npmc;
  Index eval_per_class = 20000;  // binary evaluation design
  Index eval_total = 20000;      // multiclass evaluation design

  Index num_classes() const;
  Index feature_dim() const;
  MatrixXd transition_matrix() const;  // the exact generating T (identity when clean)
};

struct Sample {
  MatrixXd x;
  VectorXi y;
};

struct NoisySample {
  MatrixXd x;
  VectorXi y_noisy;
  VectorXi y_true;
  NoiseMatrices truth;
};

/// Draw labels from class_probs (exact counts when fixed_counts) and features
/// from the family conditional on the label. Deterministic given the rng state.
Sample sample_clean(const ScenarioSpec& spec, Index n, Rng& rng);

/// Corrupt a clean sample. transition_eta flips labels through T and keeps
/// the features bit-exact. confusion_rows treats the incoming labels as the
/// fixed noisy-class slots, draws each true label from the matching row, and
/// draws features from the true class-conditional (redrawn on a flip). Both
/// return the exact generating NoiseMatrices.
NoisySample inject_noise(const ScenarioSpec& spec, const Sample& clean, Rng& rng);

/// Closed-form tilt parameters of a Gaussian family against class 0, plus the
/// basis the closed form needs. Shared covariance uses the linear form;
/// per-class covariances must be spherical and use the quadratic-diagonal form.
struct OracleDrm {
  VectorXd gamma;           // K, gamma(0) = 0
  MatrixXd beta;            // K x d
  Basis::Kind required_basis;
};

OracleDrm oracle_drm_params(const ScenarioSpec& spec);

ScenarioSpec load_scenario(const std::string& path);

}  // namespace npel
