#include <doctest.h>

#include <Eigen/Geometry>

#include "emoflow/error.hpp"
#include "emoflow/synth.hpp"
#include "support.hpp"

using namespace emoflow;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

SceneSpec small_scene(int points = 40, std::uint64_t seed = 1) {
  SceneSpec s;
  s.n_points = points;
  s.seed = seed;
  return s;
}

GroundTruth gt_for(const Twist& tw, const SceneSpec& scene = SceneSpec{}) {
  return {scene, constant_motion(tw, scene.duration)};
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("zero motion emits nothing") {
  const auto out = generate(small_scene(), constant_motion({}, 0.1));
  CHECK(out.events.empty());
}

TEST_CASE("events are sorted, in range and deterministic") {
  const auto motion = constant_motion(synth::preset_twist("joint"), 0.1);
  auto scene = small_scene(60, 3);
  scene.time_jitter = 1e-4;
  const auto a = generate(scene, motion), b = generate(scene, motion);
  REQUIRE(!a.events.empty());
  CHECK(a.events == b.events);
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    const auto& e = a.events[i];
    CHECK((e.t >= 0.0 && e.t <= scene.duration));
    if (i) CHECK(a.events[i - 1].t <= e.t);
    CHECK((e.x >= 0 && e.x < 64 && e.y >= 0 && e.y < 64));
  }
  scene.seed = 4;
  CHECK(generate(scene, motion).events != a.events);
}

TEST_CASE("event density follows pixel travel") {
  // Pure lateral translation: every point moves 1.5 px (0.3 m/s * 0.1 s * 100 / 2 m);
  // at density 4 that is 6 events per point, give or take the random phase.
  auto scene = small_scene(100);
  scene.density = 4.0;
  const auto out = generate(scene, constant_motion({Vector3d::Zero(), Vector3d(0.3, 0, 0)}, 0.1));
  CHECK(out.events.size() >= 500);
  CHECK(out.events.size() <= 600);
}

TEST_CASE("axial rotation moves points on circles about the principal point") {
  int used = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto scene = small_scene(1, seed);
    SynthOutput out;
    try {
      out = generate(scene, constant_motion({Vector3d(0, 0, 2.0), Vector3d::Zero()}, 0.1));
    } catch (const DegenerateError&) {
      continue;  // the lone point rotated out of the frame
    }
    ++used;
    REQUIRE(out.events.size() > 3);
    const Vector2d c(scene.intrinsics.cx, scene.intrinsics.cy);
    double lo = 1e9, hi = 0.0;
    for (const auto& e : out.events) {
      const double r = (Vector2d(e.x, e.y) - c).norm();
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    CHECK(hi - lo <= 0.5);
  }
  CHECK(used >= 5);
}

TEST_CASE("forward translation: expansion with the focus at the principal point") {
  const auto gt = gt_for({Vector3d::Zero(), Vector3d(0, 0, 1.0)});
  const Vector2d c(31.5, 31.5);
  CHECK(synth::gt_flow_at(gt, 0.05, c)->norm() < 1e-12);
  for (const Vector2d& px : {Vector2d(10, 5), Vector2d(60, 40), Vector2d(31.5, 0)}) {
    const Vector2d f = *synth::gt_flow_at(gt, 0.05, px);
    CHECK(f.dot(px - c) > 0.0);
    CHECK(std::abs(f.x() * (px - c).y() - f.y() * (px - c).x()) < 1e-9);
  }
}

TEST_CASE("gt flow matches differenced point trajectories") {
  SceneSpec tilted;
  tilted.normal = Vector3d(0.2, -0.1, 1.0);
  for (const char* name : {"rotation", "translation", "joint"}) {
    const auto gt = gt_for(synth::preset_twist(name), tilted);
    CounterRng rng(81);
    for (int i = 0; i < 50; ++i) {
      const double t = rng.uniform(0.01, 0.09);
      const Vector2d px(rng.uniform(0, 63), rng.uniform(0, 63));
      const double dt = 1e-4;
      const Vector2d fd = (*synth::gt_warp_pixel(gt, px, t, t + dt) - *synth::gt_warp_pixel(gt, px, t, t - dt)) / (2 * dt);
      CHECK((*synth::gt_flow_at(gt, t, px) - fd).norm() <= 0.1);
    }
  }
}

TEST_CASE("flow scales linearly with the twist") {
  const Twist base = synth::preset_twist("joint");
  const auto g1 = synth::gt_flow_grid(gt_for(base), 0.0);
  const auto g3 = synth::gt_flow_grid(gt_for(base * 3.0), 0.0);
  CHECK((g3.u - 3.0 * g1.u).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((g3.v - 3.0 * g1.v).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(g1.unit == FlowUnit::kPixelsPerSecond);
}

TEST_CASE("every generated event satisfies the geometric residual") {
  for (const char* name : {"rotation", "translation", "joint"}) {
    const auto out = generate(small_scene(30), constant_motion(synth::preset_twist(name), 0.1));
    const auto& k = out.gt.scene.intrinsics;
    double worst = 0.0;
    for (const auto& e : out.events) {
      const Vector2d px(e.x, e.y);
      const Vector2d f = *synth::gt_flow_at(out.gt, e.t, px);
      const Vector2d x = normalize_pixel(px, k);
      const Vector2d u(f.x() / k.fx, f.y() / k.fy);
      worst = std::max(worst, std::abs(geometry::geometric_residual(u, {x.x(), x.y()}, synth::twist_at(out.gt, e.t)).r));
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("plane motion against closed forms") {
  SceneSpec tilted;
  tilted.normal = Vector3d(0.3, 0.1, 1.0);
  const Vector3d n0 = tilted.normal.normalized();
  const double d0 = n0.z() * tilted.depth;

  // Translation only: the normal is fixed and the offset drops by n . nu per second.
  const Vector3d nu(0.3, 0.1, 0.1);
  const auto [nt, dt] = synth::plane_at(gt_for({Vector3d::Zero(), nu}, tilted), 0.08);
  CHECK((nt - n0).norm() < 1e-14);
  CHECK(dt == doctest::Approx(d0 - n0.dot(nu) * 0.08).epsilon(1e-12));

  // Rotation only: the normal turns by -omega t, the offset is unchanged.
  const Vector3d w(0.2, -0.1, 0.5);
  const auto [nr, dr] = synth::plane_at(gt_for({w, Vector3d::Zero()}, tilted), 0.08);
  const Vector3d expect = Eigen::AngleAxisd(-w.norm() * 0.08, w.normalized()) * n0;
  CHECK((nr - expect).norm() < 1e-12);
  CHECK(dr == doctest::Approx(d0).epsilon(1e-14));

  // Warping forward and back returns to the start.
  const auto gt = gt_for(synth::preset_twist("joint"), tilted);
  const Vector2d q = *synth::gt_warp_pixel(gt, {12.0, 50.0}, 0.0, 0.1);
  CHECK((*synth::gt_warp_pixel(gt, q, 0.1, 0.0) - Vector2d(12.0, 50.0)).norm() < 1e-9);
}

TEST_CASE("displacement grid agrees with warped pixels") {
  const auto gt = gt_for(synth::preset_twist("joint"));
  const auto g = synth::gt_displacement_grid(gt, 0.02, 0.07);
  CHECK(g.unit == FlowUnit::kPixelsPerInterval);
  for (const auto& [i, j] : {std::pair{0, 0}, std::pair{17, 40}, std::pair{63, 63}}) {
    const Vector2d d = *synth::gt_warp_pixel(gt, {double(i), double(j)}, 0.02, 0.07) - Vector2d(i, j);
    CHECK(g.u(j, i) == d.x());
    CHECK(g.v(j, i) == d.y());
  }
  // Over a short interval the displacement is the flow times the interval.
  const auto fine = synth::gt_displacement_grid(gt, 0.05, 0.0501);
  const auto rate = synth::gt_flow_grid(gt, 0.05);
  CHECK((fine.u / 1e-4 - rate.u).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("twist samples are in per-second units") {
  const Twist tw = synth::preset_twist("joint");
  const auto gt = gt_for(tw);
  const auto samples = synth::sample_twists(gt, 0.0, 0.1, 11);
  REQUIRE(samples.size() == 11);
  for (const auto& s : samples) {
    CHECK((s.omega - tw.omega).norm() < 1e-12);
    CHECK((s.nu - tw.nu).norm() < 1e-12);
  }
  CHECK_THROWS_AS(synth::sample_twists(gt, 0.0, 0.1, 1), ConfigError);
}

TEST_CASE("scene file round trip") {
  SceneSpec scene;
  scene.seed = (1ULL << 60) + 3;
  scene.normal = Vector3d(0.1, 0.2, 0.9);
  scene.time_jitter = 2e-5;
  const GroundTruth gt = gt_for(synth::preset_twist("translation"), scene);
  const auto path = testutil::scratch_dir("scene") / "s.scene";
  synth::write_scene(path, gt);
  const GroundTruth back = synth::read_scene(path);
  CHECK(back.scene.seed == scene.seed);
  CHECK(back.scene.normal == scene.normal);
  CHECK(back.scene.intrinsics == scene.intrinsics);
  CHECK(back.scene.time_jitter == scene.time_jitter);
  CHECK(back.motion.knots == gt.motion.knots);
  CHECK(back.motion.t_span == gt.motion.t_span);
}

TEST_CASE("presets and degenerate scenes") {
  CHECK(synth::preset_twist("joint").omega == Vector3d(0, 0, 0.5));
  CHECK(synth::preset_twist("joint").nu == Vector3d(0.3, 0, 0.1));
  CHECK(synth::preset_twist("rotation").nu.isZero(0.0));
  CHECK(synth::preset_twist("translation").omega.isZero(0.0));
  CHECK_THROWS_AS(synth::preset_twist("spin"), ConfigError);

  CHECK_THROWS_AS(generate(small_scene(), constant_motion({Vector3d::Zero(), Vector3d(100, 0, 0)}, 0.1)),
                  DegenerateError);
  SceneSpec bad;
  bad.depth = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

}  // TEST_SUITE
