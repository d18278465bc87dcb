#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace rmdsim::detail {

struct SvdResult {
  Eigen::MatrixXcd u;
  Eigen::VectorXd s;
  Eigen::MatrixXcd v;
};

/// BDCSVD with a correctness check on the kept part of the decomposition,
/// falling back to the slower but robust JacobiSVD when it fails. Eigen's
/// bidiagonal divide-and-conquer can silently return a bad factorization for
/// some clustered spectra; a wrong rotation here breaks the unitarity of the
/// whole evolution, so the check is not optional.
inline SvdResult verified_svd(const Eigen::MatrixXcd& m) {
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& u = svd.matrixU();
  const auto& v = svd.matrixV();
  const Eigen::VectorXd& s = svd.singularValues();
  const double scale = s.size() > 0 ? s[0] : 0.0;

  bool ok = scale > 0.0 && s.allFinite();
  if (ok) {
    const Eigen::Index k = u.cols();
    const double ortho_u = (u.adjoint() * u - Eigen::MatrixXcd::Identity(k, k)).norm();
    const double ortho_v = (v.adjoint() * v - Eigen::MatrixXcd::Identity(k, k)).norm();
    const double resid = (m * v - u * s.asDiagonal()).norm();
    ok = ortho_u < 1e-9 * k && ortho_v < 1e-9 * k && resid < 1e-8 * scale * k;
  }
  if (ok) return {u, s, v};

  Eigen::JacobiSVD<Eigen::MatrixXcd> fallback(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {fallback.matrixU(), fallback.singularValues(), fallback.matrixV()};
}

}  // namespace rmdsim::detail
