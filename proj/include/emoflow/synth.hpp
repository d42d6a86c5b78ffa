#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "emoflow/events.hpp"
#include "emoflow/geometry.hpp"
#include "emoflow/metrics.hpp"
#include "emoflow/spline.hpp"

namespace emoflow {

/// A textured plane n.P = d seen by a moving camera. Texture is a set of
/// tracked points; each emits an event per 1/density pixels of image travel.
struct SceneSpec {
  double depth = 2.0;  // metres along the optical axis at t = 0
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  int n_points = 250;
  double density = 3.0;  // events per point per pixel of travel
  double duration = 0.1;
  CameraIntrinsics intrinsics{100.0, 100.0, 31.5, 31.5, 64, 64};
  std::uint64_t seed = 1;
  double time_jitter = 0.0;  // std-dev in seconds, 0 disables

  void validate() const;
};

/// Everything needed to regenerate exact flow: the scene and its motion.
/// `motion` is in normalized-time units with t_span = duration.
struct GroundTruth {
  SceneSpec scene;
  MotionSpline motion;
};

struct SynthOutput {
  std::vector<Event> events;  // sorted by time, all within [0, duration]
  GroundTruth gt;
};

/// Constant per-second twist as a spline over the scene duration.
MotionSpline constant_motion(const Twist& per_second, double duration);

SynthOutput generate(const SceneSpec& scene, const MotionSpline& motion);

namespace synth {

/// Camera twist at time t (seconds), per-second units.
Twist twist_at(const GroundTruth& gt, double t);

/// Plane (unit normal, offset) in the camera frame at time t (seconds).
std::pair<Eigen::Vector3d, double> plane_at(const GroundTruth& gt, double t);

/// Exact image velocity at a pixel, pixels per second; empty when the pixel
/// ray does not meet the plane in front of the camera.
std::optional<Eigen::Vector2d> gt_flow_at(const GroundTruth& gt, double t, const Eigen::Vector2d& pixel);

/// Where the plane point seen at `pixel` at t_from is imaged at t_to.
std::optional<Eigen::Vector2d> gt_warp_pixel(const GroundTruth& gt, const Eigen::Vector2d& pixel, double t_from,
                                             double t_to);

FlowGrid gt_flow_grid(const GroundTruth& gt, double t);
/// Pixel displacement from t0 to t1 (seconds) at every pixel.
FlowGrid gt_displacement_grid(const GroundTruth& gt, double t0, double t1);

/// Per-second twists at `n` evenly spaced times over [t0, t1].
std::vector<Twist> sample_twists(const GroundTruth& gt, double t0, double t1, int n);

/// Scene sidecar: key=value scene parameters followed by the knot block.
void write_scene(const std::filesystem::path& path, const GroundTruth& gt);
GroundTruth read_scene(const std::filesystem::path& path);

/// Named motions: "rotation", "translation", "joint".
Twist preset_twist(const std::string& name);

}  // namespace synth
}  // namespace emoflow
