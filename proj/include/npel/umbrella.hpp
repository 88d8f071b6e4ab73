#pragma once

#include <functional>
#include <optional>

#include "npel/em.hpp"
#include "npel/model.hpp"

namespace npel {

/// Batch score function on raw features; larger scores favor class 1.
using ScoreFn = std::function<VectorXd(const MatrixXd&)>;

/// Trains a scorer from a noisy-labeled subset (features, labels).
using ScoreTrainer = std::function<ScoreFn(const MatrixXd&, const VectorXi&)>;

struct UmbrellaConfig {
  double alpha = 0.05;
  double delta = 0.05;
  // Split fractions: noisy class 0 -> (train, est, cal), class 1 -> (train, est).
  double split0_train = 0.4;
  double split0_est = 0.3;
  double split0_cal = 0.3;
  double split1_train = 0.5;
  double split1_est = 0.5;

  struct Known {
    double m0;  // P(Y=0 | noisy 0)
    double m1;  // P(Y=0 | noisy 1)
  };
  std::optional<Known> corruption;  // absent => estimate via the EL fit

  std::uint64_t seed = 0;
};

struct UmbrellaClassifier {
  ScoreFn score;
  double threshold = 0.0;  // T_(k*), an actual calibration score
  Index k_star = 0;        // 1-based order-statistic index
  Index cal_size = 0;
  double m0_used = 1.0;
  double m1_used = 0.0;
  bool saturated = false;  // no index satisfied the rule; k* fell back to m
  std::optional<ModelParams> score_params;  // present for the default scorer

  int classify(const RowVectorXd& x) const;
  VectorXi classify_all(const MatrixXd& x) const;
};

/// Solves P(Binomial(m, a) >= k) = delta for a in (0,1) by bisection to 1e-10.
double binomial_alpha(Index k, Index m, double delta);

/// D(t) = {(1-m0)/(m0-m1)} {F0(t) - F1(t)} from the empirical score CDFs of
/// the two estimation splits. Callers take the positive part.
double d_hat(double t, const VectorXd& est0_scores, const VectorXd& est1_scores,
             double m0, double m1);

/// Noise-adjusted order-statistic threshold selection. Partitions the noisy
/// classes, trains the scorer on the train splits, and picks the smallest
/// calibration index whose corruption-corrected guarantee meets alpha. With
/// corruption unset, (m0, m1) are plugged in from the EL fit on the full
/// dataset.
UmbrellaClassifier fit_umbrella(const Dataset& data, const ScoreTrainer& trainer,
                                const UmbrellaConfig& config, const EmConfig& em_config);

/// Same with the default scorer: posterior of a ridge-stabilized logistic fit
/// on the noisy train splits, expanded through the dataset's basis.
UmbrellaClassifier fit_umbrella(const Dataset& data, const UmbrellaConfig& config,
                                const EmConfig& em_config);

}  // namespace npel
