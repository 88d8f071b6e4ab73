#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace npel {

using Eigen::ArrayXd;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

/// Invalid inputs: bad dimensions, broken simplex/stochasticity, schema errors.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// File and format problems (CSV/JSON parsing, unreadable paths).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Iterative solver failed to reach its tolerance.
class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, MatrixXd last_iterate, double grad_norm)
      : std::runtime_error(what),
        last_iterate(std::move(last_iterate)),
        grad_norm(grad_norm) {}

  MatrixXd last_iterate;
  double grad_norm;
};

}  // namespace npel
