#include "stmrecon/linalg.hpp"

#include "stmrecon/error.hpp"

#include <algorithm>
#include <cmath>

namespace stmrecon {

HermitianEig hermitian_eig(const Mat &a)
{
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  if (es.info() != Eigen::Success) throw NumericError("hermitian eigendecomposition failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

Mat orthonormalize(const Mat &a)
{
  Eigen::HouseholderQR<Mat> qr(a);
  return qr.householderQ() * Mat::Identity(a.rows(), a.cols());
}

double subspace_angle(const Mat &a, const Mat &b)
{
  // sin of the largest angle is the norm of the part of b outside span(a).
  Mat r = b - a * (a.adjoint() * b);
  Eigen::JacobiSVD<Mat> svd(r);
  double s = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  return std::asin(std::min(1.0, s));
}

double hermitian_error(const Mat &a)
{
  double n = a.norm();
  if (n == 0.0) return 0.0;
  return (a - a.adjoint()).norm() / n;
}

} // namespace stmrecon
