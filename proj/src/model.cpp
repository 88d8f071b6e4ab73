#include "npel/model.hpp"

#include <cmath>
#include <sstream>

#include "npel/numeric.hpp"

namespace npel {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace

MatrixXd Basis::expand(const MatrixXd& x) const {
  switch (kind) {
    case Kind::identity:
      require(x.cols() == input_dim, "basis: feature dimension mismatch");
      return x;
    case Kind::quadratic_diagonal: {
      require(x.cols() == input_dim, "basis: feature dimension mismatch");
      MatrixXd g(x.rows(), 2 * x.cols());
      g.leftCols(x.cols()) = x;
      g.rightCols(x.cols()) = x.array().square();
      return g;
    }
    case Kind::custom_table:
      require(x.rows() == table.rows(),
              "basis: custom table row count does not match dataset size");
      return table;
  }
  throw ValidationError("basis: unknown kind");
}

RowVectorXd Basis::expand_row(const RowVectorXd& x) const {
  switch (kind) {
    case Kind::identity:
      return x;
    case Kind::quadratic_diagonal: {
      RowVectorXd g(2 * x.size());
      g.head(x.size()) = x;
      g.tail(x.size()) = x.array().square();
      return g;
    }
    case Kind::custom_table:
      throw ValidationError("basis: custom table cannot expand new rows");
  }
  throw ValidationError("basis: unknown kind");
}

Dataset::Dataset(MatrixXd features_in, VectorXi labels_in, Index num_classes_in,
                 Basis basis_in)
    : features(std::move(features_in)),
      labels(std::move(labels_in)),
      num_classes(num_classes_in),
      basis(std::move(basis_in)) {
  require(num_classes >= 2, "dataset: need at least two classes");
  require(labels.size() == features.rows(),
          "dataset: label count does not match feature rows");
  require(features.rows() >= num_classes, "dataset: need n >= K");
  require(features.allFinite(), "dataset: non-finite feature value");
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels(i) < 0 || labels(i) >= num_classes) {
      std::ostringstream msg;
      msg << "dataset: label " << labels(i) << " at row " << i
          << " outside [0, " << num_classes << ")";
      throw ValidationError(msg.str());
    }
  }
  if (basis.kind != Basis::Kind::custom_table) basis.input_dim = features.cols();
  basis_view = basis.expand(features);
}

ModelParams ModelParams::neutral(Index num_classes, Index basis_dim) {
  ModelParams params;
  params.w = VectorXd::Constant(num_classes, 1.0 / static_cast<double>(num_classes));
  params.gamma = VectorXd::Zero(num_classes);
  params.beta = MatrixXd::Zero(num_classes, basis_dim);
  params.T = MatrixXd::Identity(num_classes, num_classes);
  return params;
}

void validate(const ModelParams& params, Index num_classes, Index basis_dim) {
  require(params.w.size() == num_classes, "params: w has wrong length");
  require(params.gamma.size() == num_classes, "params: gamma has wrong length");
  require(params.beta.rows() == num_classes && params.beta.cols() == basis_dim,
          "params: beta has wrong shape");
  require(params.T.rows() == num_classes && params.T.cols() == num_classes,
          "params: T has wrong shape");
  require(params.w.allFinite() && params.gamma.allFinite() &&
              params.beta.allFinite() && params.T.allFinite(),
          "params: non-finite entry");

  require((params.w.array() >= 0.0).all(), "params: negative class proportion");
  require(std::abs(params.w.sum() - 1.0) <= 1e-10,
          "params: class proportions do not sum to 1");

  require(params.gamma(0) == 0.0, "params: gamma[0] must be exactly 0");
  require((params.beta.row(0).array() == 0.0).all(),
          "params: beta[0] must be exactly 0");

  require((params.T.array() >= 0.0).all() && (params.T.array() <= 1.0).all(),
          "params: transition entries outside [0,1]");
  for (Index k = 0; k < num_classes; ++k) {
    if (std::abs(params.T.col(k).sum() - 1.0) > 1e-10) {
      std::ostringstream msg;
      msg << "params: column " << k << " of T sums to " << params.T.col(k).sum();
      throw ValidationError(msg.str());
    }
  }
}

NoiseMatrices complete_noise_matrices(const MatrixXd& T, const VectorXd& w) {
  const Index K = w.size();
  require(T.rows() == K && T.cols() == K, "noise: T has wrong shape");
  NoiseMatrices nm;
  nm.T = T;
  nm.w = w;
  nm.w_tilde = T * w;
  nm.M.resize(K, K);
  for (Index l = 0; l < K; ++l) {
    if (nm.w_tilde(l) <= 0.0) {
      std::ostringstream msg;
      msg << "noise: noisy class " << l << " has zero marginal mass";
      throw ValidationError(msg.str());
    }
    for (Index k = 0; k < K; ++k) nm.M(l, k) = T(l, k) * w(k) / nm.w_tilde(l);
  }
  return nm;
}

NoiseMatrices complete_from_confusion(const MatrixXd& M, const VectorXd& w_tilde) {
  const Index K = w_tilde.size();
  require(M.rows() == K && M.cols() == K, "noise: M has wrong shape");
  NoiseMatrices nm;
  nm.M = M;
  nm.w_tilde = w_tilde;
  nm.w = M.transpose() * w_tilde;
  nm.T.resize(K, K);
  for (Index k = 0; k < K; ++k) {
    if (nm.w(k) <= 0.0) {
      std::ostringstream msg;
      msg << "noise: clean class " << k << " has zero marginal mass";
      throw ValidationError(msg.str());
    }
    for (Index l = 0; l < K; ++l) nm.T(l, k) = w_tilde(l) * M(l, k) / nm.w(k);
  }
  return nm;
}

namespace {

// Posterior-form intercepts gamma_dagger(k) = gamma(k) + log(w_k / w_0):
// pi_k(x) is proportional to w_k exp(gamma_k + beta_k'g(x)).
VectorXd gamma_dagger(const ModelParams& params) {
  const Index K = params.num_classes();
  VectorXd gd(K);
  for (Index k = 0; k < K; ++k) {
    if (params.w(k) <= 0.0) {
      std::ostringstream msg;
      msg << "posterior: class " << k << " has zero proportion";
      throw ValidationError(msg.str());
    }
    gd(k) = params.gamma(k) + std::log(params.w(k) / params.w(0));
  }
  return gd;
}

}  // namespace

VectorXd posterior(const ModelParams& params, const VectorXd& gx) {
  const VectorXd gd = gamma_dagger(params);
  VectorXd logits = gd + params.beta * gx;
  const double m = logits.maxCoeff();
  VectorXd out = (logits.array() - m).exp();
  out /= out.sum();
  return out;
}

MatrixXd posterior_matrix(const ModelParams& params, const MatrixXd& basis_view) {
  const VectorXd gd = gamma_dagger(params);
  MatrixXd logits = basis_view * params.beta.transpose();
  logits.rowwise() += gd.transpose();
  softmax_rows_in_place(logits);
  return logits;
}

void NpmcSpec::validate(Index num_classes) const {
  require(rho.size() == num_classes, "npmc spec: rho has wrong length");
  require((rho.array() >= 0.0).all(), "npmc spec: negative rho weight");
  require(rho.maxCoeff() > 0.0, "npmc spec: rho must have a positive entry");
  for (Index k : constrained) {
    require(k >= 0 && k < num_classes, "npmc spec: constrained class out of range");
    auto it = alpha.find(k);
    require(it != alpha.end(), "npmc spec: constrained class without target level");
    require(it->second > 0.0 && it->second < 1.0,
            "npmc spec: target level outside (0,1)");
  }
  for (const auto& [k, a] : alpha) {
    require(constrained.count(k) == 1, "npmc spec: alpha given for unconstrained class");
  }
}

}  // namespace npel
