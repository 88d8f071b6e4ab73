#include "npel/np_binary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "npel/numeric.hpp"

namespace npel {

double density_ratio_score(double pi, double w) {
  if (pi <= 0.0) return 0.0;
  if (pi >= 1.0) return kPosInf;
  return (1.0 - w) * pi / (w * (1.0 - pi));
}

double solve_threshold(const VectorXd& pis, double w_hat, double alpha) {
  if (alpha <= 0.0 || alpha >= 1.0) throw ValidationError("np-binary: alpha outside (0,1)");
  if (w_hat <= 0.0 || w_hat >= 1.0) throw ValidationError("np-binary: w_hat outside (0,1)");
  const Index n = pis.size();
  if (n < 1) throw ValidationError("np-binary: empty sample");

  struct Point {
    double r;
    double weight;  // 1 - pi
  };
  std::vector<Point> points(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double pi = clamp_unit_open(pis(i));
    points[static_cast<std::size_t>(i)] = {density_ratio_score(pi, w_hat), 1.0 - pi};
  }
  std::sort(points.begin(), points.end(),
            [](const Point& a, const Point& b) { return a.r < b.r; });

  const double target = alpha * (1.0 - w_hat);
  // L(lambda) at a jump point r_(j) is the mean weight over {i : r_i >= r_(j)};
  // scan jump points in increasing order, dropping duplicates jointly.
  double suffix = 0.0;
  for (const Point& point : points) suffix += point.weight;

  std::size_t j = 0;
  while (j < points.size()) {
    const double value = points[j].r;
    if (suffix / static_cast<double>(n) <= target) return value;
    std::size_t next = j;
    while (next < points.size() && points[next].r == value) {
      suffix -= points[next].weight;
      ++next;
    }
    j = next;
  }
  return kPosInf;  // classify nothing as 1
}

int classify_binary(const BinaryNpClassifier& clf, const VectorXd& gx) {
  if (std::isinf(clf.lambda_hat)) return 0;
  const double pi = clamp_unit_open(posterior(clf.params, gx)(1));
  return pi >= clf.posterior_threshold() ? 1 : 0;
}

VectorXi classify_binary_all(const BinaryNpClassifier& clf, const MatrixXd& basis_view) {
  VectorXi out = VectorXi::Zero(basis_view.rows());
  if (std::isinf(clf.lambda_hat)) return out;
  const MatrixXd post = posterior_matrix(clf.params, basis_view);
  const double threshold = clf.posterior_threshold();
  for (Index i = 0; i < basis_view.rows(); ++i) {
    out(i) = clamp_unit_open(post(i, 1)) >= threshold ? 1 : 0;
  }
  return out;
}

BinaryNpClassifier np_binary_from_params(const ModelParams& params,
                                         const Dataset& data, double alpha) {
  if (params.num_classes() != 2) throw ValidationError("np-binary: need K = 2");
  BinaryNpClassifier clf;
  clf.params = params;
  clf.w_hat = params.w(1);
  clf.alpha = alpha;
  const MatrixXd post = posterior_matrix(params, data.basis_view);
  clf.lambda_hat = solve_threshold(post.col(1), clf.w_hat, alpha);
  return clf;
}

BinaryNpClassifier fit_np_binary(const Dataset& data, double alpha,
                                 const EmConfig& em_config) {
  if (data.num_classes != 2) throw ValidationError("np-binary: need a K = 2 dataset");
  EmResult fit = em_fit(data, 2, em_config);
  return np_binary_from_params(fit.params, data, alpha);
}

}  // namespace npel
