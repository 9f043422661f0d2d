#pragma once

#include "stmrecon/types.hpp"

#include <Eigen/Dense>

namespace stmrecon {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

struct HermitianEig {
  RVec values; // ascending
  Mat vectors;
};

// Throws NumericError when the solver fails.
HermitianEig hermitian_eig(const Mat &a);

// Orthonormal basis of the column span via thin Householder QR.
Mat orthonormalize(const Mat &a);

// Largest principal angle between the column spans of two orthonormal bases.
double subspace_angle(const Mat &a, const Mat &b);

double hermitian_error(const Mat &a);

} // namespace stmrecon
