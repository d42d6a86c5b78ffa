#include "emoflow/selftest.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "emoflow/error.hpp"
#include "emoflow/geometry.hpp"
#include "emoflow/net.hpp"
#include "emoflow/rng.hpp"
#include "emoflow/spline.hpp"
#include "emoflow/warp.hpp"

namespace emoflow::selftest {

namespace {

Eigen::Vector3d random_vec(CounterRng& rng, double scale) {
  return {rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale)};
}

std::string describe(const Twist& tw) {
  std::ostringstream os;
  os.precision(17);
  os << "omega=(" << tw.omega.x() << ", " << tw.omega.y() << ", " << tw.omega.z() << ") nu=(" << tw.nu.x() << ", "
     << tw.nu.y() << ", " << tw.nu.z() << ")";
  return os.str();
}

bool geometry_suite(std::uint64_t seed, std::string& detail) {
  CounterRng rng(seed, 11);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const Eigen::Vector3d nu = random_vec(rng, 2.0);
    const HomogeneousPoint p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    worst = std::max(worst, std::abs(geometry::depth_coefficient(nu, p)));
  }
  if (worst > 1e-12) {
    detail = "depth-elimination identity violated: " + std::to_string(worst);
    return false;
  }
  for (int i = 0; i < 1000; ++i) {
    const Twist tw{random_vec(rng, 1.0), random_vec(rng, 1.0)};
    const HomogeneousPoint p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    const double depth = rng.uniform(0.5, 10.0);
    const double r = geometry::geometric_residual(geometry::motion_field(p, depth, tw), p, tw).r;
    if (std::abs(r) > 1e-10) {
      detail = "residual " + std::to_string(r) + " under the motion field for " + describe(tw);
      return false;
    }
    const Eigen::Matrix3d s = geometry::s_matrix(tw);
    if ((s - s.transpose()).norm() > 1e-14) {
      detail = "s_matrix not symmetric for " + describe(tw);
      return false;
    }
  }
  detail = "max depth coefficient " + std::to_string(worst);
  return true;
}

bool gradients_suite(std::uint64_t seed, std::string& detail) {
  CounterRng rng(seed, 12);
  FlowNetParams p = net::init_params(seed, 8);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.flat()(i) += rng.uniform(-0.1, 0.1);
  const FlowQuery q{0.3, {0.2, -0.4}};
  const Eigen::Vector2d up(0.7, -1.3);
  const net::Gradients g = net::backward(p, q, up);
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    FlowNetParams a = p, b = p;
    a.flat()(i) += h;
    b.flat()(i) -= h;
    const double fd = (up.dot(net::forward(a, q)) - up.dot(net::forward(b, q))) / (2 * h);
    if (std::abs(fd - g.params.flat()(i)) > 1e-6 * std::max(1.0, std::abs(fd))) {
      detail = "network parameter " + std::to_string(i) + " gradient mismatch";
      return false;
    }
    worst = std::max(worst, std::abs(fd - g.params.flat()(i)));
  }
  for (int i = 0; i < 100; ++i) {
    const Twist tw{random_vec(rng, 1.0), random_vec(rng, 1.0)};
    const HomogeneousPoint x{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    const Eigen::Vector2d u(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const geometry::Residual r = geometry::geometric_residual(u, x, tw);
    for (int k = 0; k < 3; ++k) {
      Twist a = tw, b = tw;
      a.omega(k) += h;
      b.omega(k) -= h;
      const double fo = (geometry::geometric_residual(u, x, a).r - geometry::geometric_residual(u, x, b).r) / (2 * h);
      a = tw;
      b = tw;
      a.nu(k) += h;
      b.nu(k) -= h;
      const double fn = (geometry::geometric_residual(u, x, a).r - geometry::geometric_residual(u, x, b).r) / (2 * h);
      if (std::abs(fo - r.d_omega(k)) > 1e-6 || std::abs(fn - r.d_nu(k)) > 1e-6) {
        detail = "residual twist gradient mismatch for " + describe(tw);
        return false;
      }
    }
  }
  detail = "max abs network gradient error " + std::to_string(worst);
  return true;
}

bool adjoint_suite(std::uint64_t seed, std::string& detail) {
  CounterRng rng(seed, 13);
  const FlowNetParams p = net::init_params(seed, 16);
  EventBatch batch;
  batch.x.resize(2, 20);
  batch.t.resize(20);
  for (Eigen::Index i = 0; i < 20; ++i) {
    batch.x.col(i) = Eigen::Vector2d(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
    batch.t(i) = rng.uniform();
    batch.index.push_back(i);
  }
  Eigen::Matrix2Xd up(2, 20);
  for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = rng.uniform(-1.0, 1.0);
  WarpConfig cfg;
  cfg.n_steps = 4;
  const auto traj = warp::integrate(p, batch, 0.5, cfg);
  const FlowNetParams d = warp::backward_direct(p, traj, up);
  const FlowNetParams a = warp::backward_adjoint(p, traj, up);
  const double diff = (d.flat() - a.flat()).cwiseAbs().maxCoeff();
  detail = "max |direct - adjoint| = " + std::to_string(diff);
  return diff <= 1e-6;
}

bool spline_suite(std::uint64_t seed, std::string& detail) {
  for (int i = 0; i <= 1000; ++i) {
    const double t = i / 1000.0;
    const Eigen::Vector4d b = spline::basis(t);
    if (std::abs(b.sum() - 1.0) > 1e-14 || (b.array() < 0.0).any()) {
      detail = "basis is not a partition of unity at t=" + std::to_string(t);
      return false;
    }
  }
  CounterRng rng(seed, 14);
  const Twist c{random_vec(rng, 1.0), random_vec(rng, 1.0)};
  const MotionSpline s = MotionSpline::constant(c, 1.0);
  for (int i = 0; i <= 1000; ++i) {
    const Twist v = spline::velocity(s, i / 1000.0);
    if (v.omega != c.omega || v.nu != c.nu) {
      detail = "constant knots give a non-constant velocity";
      return false;
    }
  }
  detail = "partition of unity and constant velocity hold";
  return true;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"geometry", "gradients", "adjoint", "spline"};
  return names;
}

SuiteResult run_suite(const std::string& name, std::uint64_t seed) {
  SuiteResult r;
  r.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  if (name == "geometry") r.passed = geometry_suite(seed, r.detail);
  else if (name == "gradients") r.passed = gradients_suite(seed, r.detail);
  else if (name == "adjoint") r.passed = adjoint_suite(seed, r.detail);
  else if (name == "spline") r.passed = spline_suite(seed, r.detail);
  else throw ConfigError("unknown self-test suite: " + name);
  r.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace emoflow::selftest
