#include <doctest.h>

#include <sstream>

#include "emoflow/error.hpp"
#include "emoflow/spline.hpp"
#include "support.hpp"

using namespace emoflow;

namespace {

// Textbook uniform cubic B-spline blending functions.
Eigen::Vector4d blending(double t) {
  const double u = 1.0 - t;
  return Eigen::Vector4d(u * u * u, 3 * t * t * t - 6 * t * t + 4, -3 * t * t * t + 3 * t * t + 3 * t + 1, t * t * t) /
         6.0;
}

Eigen::Matrix<double, 6, 1> stacked(const Twist& tw) {
  Eigen::Matrix<double, 6, 1> v;
  v << tw.omega, tw.nu;
  return v;
}

MotionSpline random_spline(CounterRng& rng) {
  MotionSpline s;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) s.knots(i, j) = rng.uniform(-1.0, 1.0);
  s.t_span = rng.uniform(0.01, 1.0);
  return s;
}

}  // namespace

TEST_SUITE("spline") {

TEST_CASE("basis endpoints") {
  CHECK((spline::basis(0.0) - Eigen::Vector4d(1, 4, 1, 0) / 6.0).norm() < 1e-16);
  CHECK((spline::basis(1.0) - Eigen::Vector4d(0, 1, 4, 1) / 6.0).norm() < 1e-16);
  CHECK_THROWS_AS(spline::basis(-1e-9), DomainError);
  CHECK_THROWS_AS(spline::basis(1.0 + 1e-9), DomainError);
  CHECK_THROWS_AS(spline::velocity({}, 2.0), DomainError);
}

TEST_CASE("basis matches blending functions and sums to one") {
  double worst_sum = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double t = i / 1000.0;
    const Eigen::Vector4d b = spline::basis(t);
    worst_sum = std::max(worst_sum, std::abs(b.sum() - 1.0));
    CHECK((b - blending(t)).norm() < 1e-15);
    CHECK((b.array() >= 0.0).all());
  }
  CHECK(worst_sum <= 1e-14);
}

TEST_CASE("constant knots give exactly constant velocity") {
  const Twist c{Eigen::Vector3d(0.2, -0.3, 1.7), Eigen::Vector3d(1e-3, 5.0, -0.1)};
  const auto s = MotionSpline::constant(c, 0.1);
  for (int i = 0; i <= 1000; ++i) {
    const Twist v = spline::velocity(s, i / 1000.0);
    CHECK(v.omega == c.omega);
    CHECK(v.nu == c.nu);
  }
  const auto init = MotionSpline::constant(0.2, 0.1);
  const Twist v = spline::velocity(init, 0.37);
  CHECK((stacked(v).array() == 0.2).all());
}

TEST_CASE("velocity equals basis times knots") {
  CounterRng rng(11);
  for (int n = 0; n < 100; ++n) {
    const MotionSpline s = random_spline(rng);
    const double t = rng.uniform();
    const Eigen::Matrix<double, 6, 1> expect = s.knots.transpose() * blending(t);
    CHECK((stacked(spline::velocity(s, t)) - expect).norm() < 1e-14);
  }
}

TEST_CASE("knot gradient matches finite differences") {
  CounterRng rng(12);
  const double h = 1e-6;
  for (int n = 0; n < 50; ++n) {
    const MotionSpline s = random_spline(rng);
    const double t = rng.uniform();
    const Eigen::Vector4d b = spline::basis(t);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 6; ++j) {
        MotionSpline p = s, m = s;
        p.knots(i, j) += h;
        m.knots(i, j) -= h;
        const Eigen::Matrix<double, 6, 1> fd =
            (stacked(spline::velocity(p, t)) - stacked(spline::velocity(m, t))) / (2 * h);
        CHECK((fd - b(i) * Eigen::Matrix<double, 6, 1>::Unit(j)).cwiseAbs().maxCoeff() <= 1e-8);
      }
    }
  }
}

TEST_CASE("to_physical") {
  const Twist tw{Eigen::Vector3d::Constant(0.2), Eigen::Vector3d::Constant(0.2)};
  const Twist p = spline::to_physical(tw, 0.1);
  CHECK(p.omega.isApprox(Eigen::Vector3d::Constant(2.0)));
  CHECK(p.nu.isApprox(Eigen::Vector3d::Constant(2.0)));
  CHECK(stacked(spline::to_physical(tw, 1.0)) == stacked(tw));
  CHECK_THROWS_AS(spline::to_physical(tw, 0.0), DomainError);
}

TEST_CASE("knot file round trip is exact") {
  CounterRng rng(13);
  const MotionSpline s = random_spline(rng);
  std::stringstream ss;
  spline::write_knots(ss, s);
  const MotionSpline back = spline::read_knots(ss);
  CHECK(back.knots == s.knots);
  CHECK(back.t_span == s.t_span);

  std::istringstream bad("span=1\n");
  CHECK_THROWS_AS(spline::read_knots(bad), FormatError);
  std::istringstream short_rows("t_span=1\n1,2,3,4,5,6\n");
  CHECK_THROWS_AS(spline::read_knots(short_rows), ParseError);
}

TEST_CASE("trajectory csv covers the span with endpoints") {
  const auto s = MotionSpline::constant(Twist{Eigen::Vector3d(0, 0, 0.05), Eigen::Vector3d(0.03, 0, 0.01)}, 0.1);
  std::stringstream ss;
  spline::write_trajectory_csv(ss, s, 2.0, 100.0);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "t,wx,wy,wz,vx,vy,vz");
  std::vector<std::string> rows;
  while (std::getline(ss, line)) rows.push_back(line);
  REQUIRE(rows.size() == 11);
  CHECK(std::stod(rows.front()) == 2.0);
  CHECK(std::stod(rows.back()) == doctest::Approx(2.1));
  // 0.05 per normalized unit over 0.1 s is 0.5 rad/s.
  CHECK(rows.front().find(",0.5,") != std::string::npos);
}

}  // TEST_SUITE
