#pragma once

// Ellipsoidal local region {x : x'Ex <= alpha^2} and the exact maxima of
// (c'x)^2 and x'Qx over it.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "roaqc/error.hpp"

namespace roaqc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Smallest admissible lambda_min / lambda_max for an SPD shape matrix.
inline constexpr double kSpdConditionFloor = 1e-12;

inline double lambda_max_symmetric(const MatrixXd& S) {
  const MatrixXd sym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[sym.rows() - 1];
}

inline double lambda_min_symmetric(const MatrixXd& S) {
  const MatrixXd sym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

/// E^{-1/2} from the symmetric eigendecomposition E = V diag(l) V'.
inline MatrixXd sqrt_inv(const MatrixXd& E) {
  if (E.rows() != E.cols() || E.rows() == 0) throw DimensionError("sqrt_inv needs a square nonempty matrix");
  const double scale = std::max(1.0, E.cwiseAbs().maxCoeff());
  if ((E - E.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw NotPositiveDefiniteError("sqrt_inv: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (E + E.transpose()));
  const VectorXd& l = es.eigenvalues();
  if (!(l[0] > 0.0) || l[0] <= kSpdConditionFloor * l[l.size() - 1])
    throw NotPositiveDefiniteError("sqrt_inv: matrix is not positive definite (lambda_min=" + std::to_string(l[0]) +
                                   ", lambda_max=" + std::to_string(l[l.size() - 1]) + ")");
  const MatrixXd& V = es.eigenvectors();
  MatrixXd R = V * l.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
  return 0.5 * (R + R.transpose());
}

class Ellipsoid {
 public:
  Ellipsoid(MatrixXd E, double alpha) : E_(std::move(E)), alpha_(alpha) {
    if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw Error("ellipsoid alpha must be positive");
    inv_sqrt_ = sqrt_inv(E_);
    inv_ = inv_sqrt_ * inv_sqrt_;
    inv_ = 0.5 * (inv_ + inv_.transpose());
  }

  static Ellipsoid identity(int n, double alpha) { return Ellipsoid(MatrixXd::Identity(n, n), alpha); }

  int dim() const { return static_cast<int>(E_.rows()); }
  const MatrixXd& E() const { return E_; }
  double alpha() const { return alpha_; }
  const MatrixXd& inv() const { return inv_; }
  const MatrixXd& inv_sqrt() const { return inv_sqrt_; }

  /// Same shape, different radius parameter.
  Ellipsoid with_alpha(double alpha) const {
    Ellipsoid e = *this;
    if (!(alpha > 0.0)) throw Error("ellipsoid alpha must be positive");
    e.alpha_ = alpha;
    return e;
  }

  bool contains(const VectorXd& x) const {
    check_dim(x.size());
    return x.dot(E_ * x) <= alpha_ * alpha_ * (1.0 + 1e-12);
  }

  void check_dim(Eigen::Index n) const {
    if (n != E_.rows())
      throw DimensionError("vector has length " + std::to_string(n) + ", ellipsoid dimension is " +
                           std::to_string(E_.rows()));
  }

 private:
  MatrixXd E_;
  double alpha_;
  MatrixXd inv_sqrt_;
  MatrixXd inv_;
};

inline bool membership(const Ellipsoid& ell, const VectorXd& x) { return ell.contains(x); }

/// max (c'x)^2 over the ellipsoid = alpha^2 c'E^{-1}c.
inline double max_linear_sq(const VectorXd& c, const Ellipsoid& ell) {
  ell.check_dim(c.size());
  return ell.alpha() * ell.alpha() * c.dot(ell.inv() * c);
}

/// max x'Qx over the ellipsoid = alpha^2 lambda_max(E^{-1/2} Q E^{-1/2}); requires lambda_max(Q) > 0.
inline double max_quadform(const MatrixXd& Q, const Ellipsoid& ell) {
  ell.check_dim(Q.rows());
  if (Q.rows() != Q.cols()) throw DimensionError("max_quadform needs a square matrix");
  const MatrixXd Qs = 0.5 * (Q + Q.transpose());
  const double scale = std::max(1.0, Qs.cwiseAbs().maxCoeff());
  if (lambda_max_symmetric(Qs) <= 1e-14 * scale)
    throw SignatureError("max_quadform: lambda_max(Q) must be positive");
  const MatrixXd Qt = ell.inv_sqrt() * Qs * ell.inv_sqrt();
  return ell.alpha() * ell.alpha() * lambda_max_symmetric(Qt);
}

}  // namespace roaqc
