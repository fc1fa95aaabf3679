#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <stdexcept>
#include <string>
#include <vector>

namespace bioconic {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Index = Eigen::Index;

// Thrown for structurally invalid inputs (bad dimensions, sign violations,
// unknown tags). The message names the offending field/index.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Numerical failures that are not the caller's fault (singular matrix where
// one was required, Newton divergence).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace bioconic
