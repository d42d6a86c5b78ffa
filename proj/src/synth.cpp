#include "emoflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "emoflow/error.hpp"
#include "emoflow/rng.hpp"

namespace emoflow {

namespace {

constexpr double kStep = 1e-3;  // normalized-time integration step

Twist normalized_twist(const MotionSpline& m, double tau) { return spline::velocity(m, std::clamp(tau, 0.0, 1.0)); }

// Scene point in the camera frame: dP/dtau = -nu - omega x P.
Eigen::Vector3d point_rate(const MotionSpline& m, double tau, const Eigen::Vector3d& p) {
  const Twist tw = normalized_twist(m, tau);
  return -tw.nu - tw.omega.cross(p);
}

Eigen::Vector3d point_step(const MotionSpline& m, double tau, double h, const Eigen::Vector3d& p) {
  const Eigen::Vector3d k1 = point_rate(m, tau, p);
  const Eigen::Vector3d k2 = point_rate(m, tau + 0.5 * h, p + 0.5 * h * k1);
  const Eigen::Vector3d k3 = point_rate(m, tau + 0.5 * h, p + 0.5 * h * k2);
  const Eigen::Vector3d k4 = point_rate(m, tau + h, p + h * k3);
  return p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Eigen::Vector3d integrate_point(const MotionSpline& m, Eigen::Vector3d p, double tau0, double tau1) {
  const double span = tau1 - tau0;
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(span) / kStep)));
  const double h = span / n;
  for (int s = 0; s < n; ++s) p = point_step(m, tau0 + s * h, h, p);
  return p;
}

Eigen::Vector2d project(const Eigen::Vector3d& p, const CameraIntrinsics& k) {
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

Eigen::Vector3d ray(const Eigen::Vector2d& pixel, const CameraIntrinsics& k) {
  return {(pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0};
}

bool in_frame(const Eigen::Vector2d& px, const CameraIntrinsics& k) {
  return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < k.width && px.y() < k.height;
}

// Back-projection of a pixel onto the plane; empty behind the camera.
std::optional<Eigen::Vector3d> lift(const Eigen::Vector2d& pixel, const Eigen::Vector3d& n, double d,
                                    const CameraIntrinsics& k) {
  const Eigen::Vector3d r = ray(pixel, k);
  const double nr = n.dot(r);
  if (nr == 0.0) return std::nullopt;
  const double z = d / nr;
  if (!(z > 0.0)) return std::nullopt;
  return r * z;
}

}  // namespace

void SceneSpec::validate() const {
  intrinsics.validate();
  if (!(depth > 0.0)) throw ConfigError("plane depth must be positive");
  if (!(normal.norm() > 0.0) || !(normal.z() > 0.0)) throw ConfigError("plane normal must face the camera");
  if (n_points < 1) throw ConfigError("n_points must be positive");
  if (!(density > 0.0)) throw ConfigError("density must be positive");
  if (!(duration > 0.0)) throw ConfigError("duration must be positive");
  if (time_jitter < 0.0) throw ConfigError("time_jitter must be non-negative");
}

MotionSpline constant_motion(const Twist& per_second, double duration) {
  return MotionSpline::constant(per_second * duration, duration);
}

SynthOutput generate(const SceneSpec& scene, const MotionSpline& motion) {
  scene.validate();
  const CameraIntrinsics& k = scene.intrinsics;
  SynthOutput out{{}, {scene, motion}};
  out.gt.motion.t_span = scene.duration;
  const MotionSpline& m = out.gt.motion;

  const Eigen::Vector3d n0 = scene.normal.normalized();
  const double d0 = n0.z() * scene.depth;
  const double threshold = 1.0 / scene.density;
  const int n_steps = static_cast<int>(std::lround(1.0 / kStep));
  const double h = 1.0 / n_steps;

  CounterRng rng(scene.seed, /*stream=*/0x53594e);
  int survivors = 0;
  for (int pt = 0; pt < scene.n_points; ++pt) {
    const Eigen::Vector2d start(rng.uniform(0.0, k.width), rng.uniform(0.0, k.height));
    double travelled = rng.uniform(0.0, threshold);  // random phase of the first event
    auto lifted = lift(start, n0, d0, k);
    if (!lifted) throw DegenerateError("plane is not visible at a seeded pixel");
    Eigen::Vector3d p = *lifted;
    Eigen::Vector2d prev = start;
    bool alive = true;
    for (int s = 0; s < n_steps; ++s) {
      const double tau = s * h;
      p = point_step(m, tau, h, p);
      if (!(p.z() > 0.0)) {
        alive = false;
        break;
      }
      const Eigen::Vector2d cur = project(p, k);
      const double len = (cur - prev).norm();
      // Emit at every multiple of the threshold crossed inside this step.
      double pos = threshold - travelled;
      for (; pos <= len; pos += threshold) {
        const double a = len > 0.0 ? pos / len : 0.0;
        const Eigen::Vector2d px = prev + a * (cur - prev);
        Event e;
        e.t = (tau + a * h) * scene.duration;
        e.x = static_cast<float>(px.x());
        e.y = static_cast<float>(px.y());
        e.p = rng.uniform() < 0.5 ? std::int8_t{-1} : std::int8_t{1};
        if (scene.time_jitter > 0.0) e.t += scene.time_jitter * rng.normal();
        e.t = std::clamp(e.t, 0.0, scene.duration);
        if (in_frame({e.x, e.y}, k)) out.events.push_back(e);
      }
      travelled = len - (pos - threshold);
      prev = cur;
    }
    if (alive && in_frame(prev, k)) ++survivors;
  }
  if (survivors == 0) throw DegenerateError("every scene point left the frame");
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return out;
}

namespace synth {

Twist twist_at(const GroundTruth& gt, double t) {
  return spline::to_physical(normalized_twist(gt.motion, t / gt.scene.duration), gt.scene.duration);
}

std::pair<Eigen::Vector3d, double> plane_at(const GroundTruth& gt, double t) {
  Eigen::Vector3d n = gt.scene.normal.normalized();
  double d = n.z() * gt.scene.depth;
  const double tau1 = t / gt.scene.duration;
  if (tau1 == 0.0) return {n, d};
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(tau1) / kStep)));
  const double h = tau1 / steps;
  // dn/dtau = -omega x n, dd/dtau = -n . nu keeps n.P = d for every scene point.
  auto rate = [&](double tau, const Eigen::Vector3d& nn) {
    const Twist tw = normalized_twist(gt.motion, tau);
    return std::pair<Eigen::Vector3d, double>{-tw.omega.cross(nn), -nn.dot(tw.nu)};
  };
  for (int s = 0; s < steps; ++s) {
    const double tau = s * h;
    const auto [n1, d1] = rate(tau, n);
    const auto [n2, d2] = rate(tau + 0.5 * h, n + 0.5 * h * n1);
    const auto [n3, d3] = rate(tau + 0.5 * h, n + 0.5 * h * n2);
    const auto [n4, d4] = rate(tau + h, n + h * n3);
    n += (h / 6.0) * (n1 + 2.0 * n2 + 2.0 * n3 + n4);
    d += (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
  }
  return {n, d};
}

namespace {

std::optional<Eigen::Vector2d> flow_with_plane(const GroundTruth& gt, const Twist& tw, const Eigen::Vector3d& n,
                                               double d, const Eigen::Vector2d& pixel) {
  const CameraIntrinsics& k = gt.scene.intrinsics;
  const auto p = lift(pixel, n, d, k);
  if (!p) return std::nullopt;
  const Eigen::Vector3d r = ray(pixel, k);
  const Eigen::Vector2d u = geometry::motion_field({r.x(), r.y()}, p->z(), tw);
  return Eigen::Vector2d(k.fx * u.x(), k.fy * u.y());
}

}  // namespace

std::optional<Eigen::Vector2d> gt_flow_at(const GroundTruth& gt, double t, const Eigen::Vector2d& pixel) {
  const auto [n, d] = plane_at(gt, t);
  return flow_with_plane(gt, twist_at(gt, t), n, d, pixel);
}

std::optional<Eigen::Vector2d> gt_warp_pixel(const GroundTruth& gt, const Eigen::Vector2d& pixel, double t_from,
                                             double t_to) {
  const auto [n, d] = plane_at(gt, t_from);
  const auto p = lift(pixel, n, d, gt.scene.intrinsics);
  if (!p) return std::nullopt;
  const double dur = gt.scene.duration;
  const Eigen::Vector3d q = integrate_point(gt.motion, *p, t_from / dur, t_to / dur);
  if (!(q.z() > 0.0)) return std::nullopt;
  return project(q, gt.scene.intrinsics);
}

FlowGrid gt_flow_grid(const GroundTruth& gt, double t) {
  const CameraIntrinsics& k = gt.scene.intrinsics;
  FlowGrid g = FlowGrid::zeros(k.width, k.height, FlowUnit::kPixelsPerSecond);
  const auto [n, d] = plane_at(gt, t);
  const Twist tw = twist_at(gt, t);
  for (int j = 0; j < k.height; ++j) {
    for (int i = 0; i < k.width; ++i) {
      const auto f = flow_with_plane(gt, tw, n, d, {double(i), double(j)});
      g.valid(j, i) = f ? 1 : 0;
      if (f) {
        g.u(j, i) = f->x();
        g.v(j, i) = f->y();
      }
    }
  }
  return g;
}

FlowGrid gt_displacement_grid(const GroundTruth& gt, double t0, double t1) {
  const CameraIntrinsics& k = gt.scene.intrinsics;
  FlowGrid g = FlowGrid::zeros(k.width, k.height, FlowUnit::kPixelsPerInterval);
  const auto [n, d] = plane_at(gt, t0);
  const double dur = gt.scene.duration;
  for (int j = 0; j < k.height; ++j) {
    for (int i = 0; i < k.width; ++i) {
      const Eigen::Vector2d px(i, j);
      const auto p = lift(px, n, d, k);
      std::optional<Eigen::Vector3d> q;
      if (p) q = integrate_point(gt.motion, *p, t0 / dur, t1 / dur);
      const bool ok = q && q->z() > 0.0;
      g.valid(j, i) = ok ? 1 : 0;
      if (ok) {
        const Eigen::Vector2d dst = project(*q, k) - px;
        g.u(j, i) = dst.x();
        g.v(j, i) = dst.y();
      }
    }
  }
  return g;
}

std::vector<Twist> sample_twists(const GroundTruth& gt, double t0, double t1, int n) {
  if (n < 2) throw ConfigError("need at least two twist samples");
  std::vector<Twist> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(twist_at(gt, t0 + (t1 - t0) * i / (n - 1)));
  return out;
}

void write_scene(const std::filesystem::path& path, const GroundTruth& gt) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  const SceneSpec& s = gt.scene;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "depth=" << s.depth << "\nnormal_x=" << s.normal.x() << "\nnormal_y=" << s.normal.y()
     << "\nnormal_z=" << s.normal.z() << "\nn_points=" << s.n_points << "\ndensity=" << s.density
     << "\nduration=" << s.duration << "\nfx=" << s.intrinsics.fx << "\nfy=" << s.intrinsics.fy
     << "\ncx=" << s.intrinsics.cx << "\ncy=" << s.intrinsics.cy << "\nwidth=" << s.intrinsics.width
     << "\nheight=" << s.intrinsics.height << "\nseed=" << s.seed << "\ntime_jitter=" << s.time_jitter
     << "\n[knots]\n";
  spline::write_knots(os, gt.motion);
}

GroundTruth read_scene(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  bool knots = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line == "[knots]") {
      knots = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value in scene file", lineno);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (!knots) throw FormatError("scene file has no [knots] block");
  auto raw = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("scene file lacks ") + key);
    return it->second;
  };
  auto need = [&](const char* key) {
    try {
      return std::stod(raw(key));
    } catch (const std::logic_error&) {
      throw FormatError(std::string("bad number for ") + key + " in scene file");
    }
  };
  GroundTruth gt;
  SceneSpec& s = gt.scene;
  s.depth = need("depth");
  s.normal = {need("normal_x"), need("normal_y"), need("normal_z")};
  s.n_points = static_cast<int>(need("n_points"));
  s.density = need("density");
  s.duration = need("duration");
  s.intrinsics = {need("fx"), need("fy"), need("cx"), need("cy"), static_cast<int>(need("width")),
                  static_cast<int>(need("height"))};
  try {
    s.seed = std::stoull(raw("seed"));
  } catch (const std::logic_error&) {
    throw FormatError("bad seed in scene file");
  }
  s.time_jitter = need("time_jitter");
  s.validate();
  gt.motion = spline::read_knots(is);
  return gt;
}

Twist preset_twist(const std::string& name) {
  if (name == "rotation") return {{0.2, -0.1, 0.5}, {0.0, 0.0, 0.0}};
  if (name == "translation") return {{0.0, 0.0, 0.0}, {0.3, 0.1, 0.1}};
  if (name == "joint") return {{0.0, 0.0, 0.5}, {0.3, 0.0, 0.1}};
  throw ConfigError("unknown motion preset: " + name);
}

}  // namespace synth
}  // namespace emoflow
