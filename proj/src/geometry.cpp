#include "emoflow/geometry.hpp"

#include <atomic>

#include "emoflow/error.hpp"

namespace emoflow::geometry {

namespace {
std::atomic<bool> g_flip_s{false};
}

namespace testing {
void set_s_matrix_sign_flip(bool flip) { g_flip_s.store(flip); }
bool s_matrix_sign_flipped() { return g_flip_s.load(); }
}  // namespace testing

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Matrix3d a_matrix(const HomogeneousPoint& p) {
  Eigen::Matrix3d m;
  m << -1.0, 0.0, p.x,
       0.0, -1.0, p.y,
       0.0, 0.0, 0.0;
  return m;
}

Eigen::Matrix3d b_matrix(const HomogeneousPoint& p) {
  Eigen::Matrix3d m;
  m << p.x * p.y, -(1.0 + p.x * p.x), p.y,
       1.0 + p.y * p.y, -p.x * p.y, -p.x,
       0.0, 0.0, 0.0;
  return m;
}

Eigen::Vector2d motion_field(const HomogeneousPoint& p, double depth, const Twist& twist) {
  if (!(depth > 0.0)) throw DomainError("motion_field: depth must be positive");
  const Eigen::Vector3d m = a_matrix(p) * twist.nu / depth + b_matrix(p) * twist.omega;
  return m.head<2>();
}

Eigen::Matrix3d s_matrix(const Twist& twist) {
  const Eigen::Matrix3d w = skew(twist.omega);
  const Eigen::Matrix3d n = skew(twist.nu);
  const Eigen::Matrix3d s = 0.5 * (n * w + w * n);
  return g_flip_s.load(std::memory_order_relaxed) ? Eigen::Matrix3d(-s) : s;
}

double depth_coefficient(const Eigen::Vector3d& nu, const HomogeneousPoint& p) {
  return nu.dot(a_matrix(p).transpose() * skew(nu) * p.vec());
}

Residual geometric_residual(const Eigen::Vector2d& u, const HomogeneousPoint& p, const Twist& twist) {
  const Eigen::Vector3d x = p.vec();
  const Eigen::Vector3d u3(u.x(), u.y(), 0.0);
  const Eigen::Vector3d& w = twist.omega;
  const Eigen::Vector3d& n = twist.nu;

  const Eigen::Vector3d n_cross_x = n.cross(x);
  Residual res;
  res.r = u3.dot(n_cross_x) - x.dot(s_matrix(twist) * x);

  // x^T s x = (w.x)(n.x) - (w.n)|x|^2, so both partials are linear in the other velocity.
  const double wx = w.dot(x);
  const double nx = n.dot(x);
  const double xx = x.squaredNorm();
  res.d_u = n_cross_x.head<2>();
  res.d_nu = x.cross(u3) - wx * x + xx * w;
  res.d_omega = -nx * x + xx * n;
  return res;
}

}  // namespace emoflow::geometry
