#pragma once

#include <iosfwd>

#include <Eigen/Core>

#include "emoflow/geometry.hpp"

namespace emoflow {

using KnotMatrix = Eigen::Matrix<double, 4, 6>;

/// Single uniform cubic B-spline segment over normalized time [0, 1].
/// Each knot row is [wx, wy, wz, vx, vy, vz] in per-segment (normalized-time) units.
struct MotionSpline {
  KnotMatrix knots = KnotMatrix::Zero();
  double t_span = 1.0;  // seconds covered by normalized time [0, 1]

  static MotionSpline constant(double value, double t_span);
  static MotionSpline constant(const Twist& twist, double t_span);
};

namespace spline {

/// Basis weights (1/6) [t^3 t^2 t 1] M. Throws DomainError for t outside [0, 1].
Eigen::Vector4d basis(double t);

/// Twist at normalized time t. d twist_j / d knots(i, j) = basis(t)(i).
Twist velocity(const MotionSpline& s, double t);

/// Per-second units: every component divided by t_span.
Twist to_physical(const Twist& twist, double t_span);

/// CSV "t,wx,wy,wz,vx,vy,vz" in seconds and per-second units, sampled at
/// `rate_hz` over the span, starting at `t_start`. Endpoints are always included.
void write_trajectory_csv(std::ostream& os, const MotionSpline& s, double t_start, double rate_hz,
                          bool header = true);

/// Knot file: "t_span=<s>" followed by four CSV rows of knots.
void write_knots(std::ostream& os, const MotionSpline& s);
MotionSpline read_knots(std::istream& is);

}  // namespace spline
}  // namespace emoflow
