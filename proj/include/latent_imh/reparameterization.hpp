#pragma once

#include "latent_imh/linear_map.hpp"

#include <Eigen/SVD>

namespace latent_imh {

/**
 * Square reparameterization of a rectangular latent map.
 *
 *   v_x = [v_y, v_plus]  (d_u x d_x, orthonormal columns)
 *   z   = O v_x          (d_y x d_x)
 *
 * so that z v_x^T = O and y = z (v_x^T F_raw) x reproduces y = O F_raw x.
 */
struct ReparamResult {
  Matrix v_x;
  Matrix z;
  Matrix v_y;
};

/**
 * Builds v_y from the reduced SVD of O and v_plus from the dominant left
 * singular vectors of (I - v_y v_y^T) ftilde_raw. Ties among singular values
 * keep the order the SVD returns.
 */
inline ReparamResult build_reparameterization(const LinearMap& observation,
                                              const LinearMap& ftilde_raw) {
  const Index d_y = observation.rows();
  const Index d_u = observation.cols();
  const Index d_x = ftilde_raw.cols();
  check_length("build_reparameterization: Ftilde_raw rows vs O cols", d_u, ftilde_raw.rows());
  if (d_y > d_x) {
    throw std::invalid_argument("build_reparameterization: d_y (" + std::to_string(d_y) +
                                ") exceeds d_x (" + std::to_string(d_x) + ")");
  }
  if (d_x > d_u) {
    throw std::invalid_argument("build_reparameterization: d_x exceeds d_u");
  }

  const Matrix o = observation.to_dense();
  Eigen::JacobiSVD<Matrix> svd_o(o, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd_o.singularValues();
  if (sv.size() < d_y || sv[d_y - 1] < 1e-12 * sv[0]) {
    throw SingularOperatorError("build_reparameterization: observation operator is rank deficient");
  }

  ReparamResult out;
  out.v_y = svd_o.matrixV().leftCols(d_y);
  out.v_x.resize(d_u, d_x);
  out.v_x.leftCols(d_y) = out.v_y;

  const Index extra = d_x - d_y;
  if (extra > 0) {
    Matrix projected = ftilde_raw.to_dense();
    projected -= out.v_y * (out.v_y.transpose() * projected);
    Eigen::BDCSVD<Matrix> svd_p(projected, Eigen::ComputeThinU);
    if (svd_p.singularValues()[extra - 1] <= 1e-12 * svd_p.singularValues()[0]) {
      throw SingularOperatorError(
          "build_reparameterization: projected approximate operator has rank below d_x - d_y");
    }
    out.v_x.rightCols(extra) = svd_p.matrixU().leftCols(extra);
  }
  out.z = o * out.v_x;
  return out;
}

}  // namespace latent_imh
