#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace emoflow {

/// Point on the normalized image plane, homogeneous coordinate fixed to 1.
struct HomogeneousPoint {
  double x = 0.0;
  double y = 0.0;

  Eigen::Vector3d vec() const { return {x, y, 1.0}; }
};

/// Camera angular (omega) and linear (nu) velocity.
struct Twist {
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d nu = Eigen::Vector3d::Zero();

  Twist operator+(const Twist& o) const { return {omega + o.omega, nu + o.nu}; }
  Twist operator*(double s) const { return {omega * s, nu * s}; }
  bool is_finite() const { return omega.allFinite() && nu.allFinite(); }
};

namespace geometry {

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// Translational part of the motion field: rows [-1,0,x; 0,-1,y; 0,0,0].
Eigen::Matrix3d a_matrix(const HomogeneousPoint& p);

/// Rotational part of the motion field: rows [xy, -(1+x^2), y; 1+y^2, -xy, -x; 0,0,0].
Eigen::Matrix3d b_matrix(const HomogeneousPoint& p);

/// Image velocity (1/Z) A(x) nu + B(x) omega; throws DomainError unless depth > 0.
Eigen::Vector2d motion_field(const HomogeneousPoint& p, double depth, const Twist& twist);

/// Symmetrized product 0.5 ([nu]x [omega]x + [omega]x [nu]x).
Eigen::Matrix3d s_matrix(const Twist& twist);

/// Coefficient of 1/Z after projecting the motion field onto nu x x.
/// Identically zero; exposed for the self-test.
double depth_coefficient(const Eigen::Vector3d& nu, const HomogeneousPoint& p);

struct Residual {
  double r = 0.0;
  Eigen::Vector2d d_u = Eigen::Vector2d::Zero();
  Eigen::Vector3d d_omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d d_nu = Eigen::Vector3d::Zero();
};

/// Depth-free differential epipolar residual r = u^T [nu]x x - x^T s x, with
/// u lifted to (u, v, 0), plus its exact partial derivatives.
Residual geometric_residual(const Eigen::Vector2d& u, const HomogeneousPoint& p, const Twist& twist);

namespace testing {
/// Mutation hook for the self-test: flips the sign of s_matrix while set.
void set_s_matrix_sign_flip(bool flip);
bool s_matrix_sign_flipped();
}  // namespace testing

}  // namespace geometry
}  // namespace emoflow
