#include "emoflow/spline.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "emoflow/error.hpp"

namespace emoflow {

MotionSpline MotionSpline::constant(double value, double t_span) {
  MotionSpline s;
  s.knots.setConstant(value);
  s.t_span = t_span;
  return s;
}

MotionSpline MotionSpline::constant(const Twist& twist, double t_span) {
  MotionSpline s;
  for (int i = 0; i < 4; ++i) {
    s.knots.row(i).head<3>() = twist.omega.transpose();
    s.knots.row(i).tail<3>() = twist.nu.transpose();
  }
  s.t_span = t_span;
  return s;
}

namespace spline {

Eigen::Vector4d basis(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("spline basis: t must lie in [0, 1]");
  static const Eigen::Matrix4d kBasis = (Eigen::Matrix4d() << -1, 3, -3, 1,
                                                              3, -6, 3, 0,
                                                              -3, 0, 3, 0,
                                                              1, 4, 1, 0).finished();
  const Eigen::RowVector4d powers(t * t * t, t * t, t, 1.0);
  return (powers * kBasis).transpose() / 6.0;
}

Twist velocity(const MotionSpline& s, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("spline velocity: t must lie in [0, 1]");
  // Cumulative form: knot0 + sum_i C_i(t) (knot_i - knot_{i-1}), with C_i = sum_{j>=i} B_j.
  // Algebraically identical to B(t) * knots; constant knots give the knot value exactly.
  const double t2 = t * t;
  const double t3 = t2 * t;
  const double c1 = (5.0 + 3.0 * t - 3.0 * t2 + t3) / 6.0;
  const double c2 = (1.0 + 3.0 * t + 3.0 * t2 - 2.0 * t3) / 6.0;
  const double c3 = t3 / 6.0;
  const Eigen::Matrix<double, 1, 6> v = s.knots.row(0) + c1 * (s.knots.row(1) - s.knots.row(0)) +
                                        c2 * (s.knots.row(2) - s.knots.row(1)) +
                                        c3 * (s.knots.row(3) - s.knots.row(2));
  return {v.head<3>().transpose(), v.tail<3>().transpose()};
}

Twist to_physical(const Twist& twist, double t_span) {
  if (!(t_span > 0.0)) throw DomainError("to_physical: t_span must be positive");
  return {twist.omega / t_span, twist.nu / t_span};
}

void write_trajectory_csv(std::ostream& os, const MotionSpline& s, double t_start, double rate_hz,
                          bool header) {
  if (!(rate_hz > 0.0)) throw DomainError("trajectory rate must be positive");
  if (header) os << "t,wx,wy,wz,vx,vy,vz\n";
  const auto n = std::max<long>(1, std::lround(std::ceil(s.t_span * rate_hz)));
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (long i = 0; i <= n; ++i) {
    const double tn = static_cast<double>(i) / static_cast<double>(n);
    const Twist tw = to_physical(velocity(s, tn), s.t_span);
    os << t_start + tn * s.t_span;
    for (int k = 0; k < 3; ++k) os << ',' << tw.omega(k);
    for (int k = 0; k < 3; ++k) os << ',' << tw.nu(k);
    os << '\n';
  }
}

void write_knots(std::ostream& os, const MotionSpline& s) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "t_span=" << s.t_span << '\n';
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 6; ++j) os << (j ? "," : "") << s.knots(i, j);
    os << '\n';
  }
}

MotionSpline read_knots(std::istream& is) {
  MotionSpline s;
  std::string line;
  if (!std::getline(is, line) || line.rfind("t_span=", 0) != 0) {
    throw FormatError("knot file must start with t_span=");
  }
  s.t_span = std::stod(line.substr(7));
  for (int i = 0; i < 4; ++i) {
    if (!std::getline(is, line)) throw ParseError("missing knot row", static_cast<std::size_t>(i + 2));
    std::istringstream row(line);
    for (int j = 0; j < 6; ++j) {
      std::string field;
      if (!std::getline(row, field, ',')) throw ParseError("short knot row", static_cast<std::size_t>(i + 2));
      s.knots(i, j) = std::stod(field);
    }
  }
  return s;
}

}  // namespace spline
}  // namespace emoflow
