#include "emoflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>

#include "emoflow/binary_io.hpp"
#include "emoflow/error.hpp"

namespace emoflow {

namespace {
constexpr std::string_view kFlowMagic = "FLW1";
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
}  // namespace

FlowGrid FlowGrid::zeros(int width, int height, FlowUnit unit) {
  FlowGrid g;
  g.unit = unit;
  g.u = Eigen::MatrixXd::Zero(height, width);
  g.v = Eigen::MatrixXd::Zero(height, width);
  g.valid = Mask::Ones(height, width);
  return g;
}

void write_flow_grid(std::ostream& os, const FlowGrid& g) {
  bin::put_magic(os, kFlowMagic);
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(g.height()));
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(g.width()));
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(g.unit));
  for (int j = 0; j < g.height(); ++j) {
    for (int i = 0; i < g.width(); ++i) {
      bin::put<float>(os, static_cast<float>(g.u(j, i)));
      bin::put<float>(os, static_cast<float>(g.v(j, i)));
    }
  }
  for (int j = 0; j < g.height(); ++j)
    for (int i = 0; i < g.width(); ++i) bin::put<std::uint8_t>(os, g.valid(j, i) ? 1 : 0);
}

FlowGrid read_flow_grid(std::istream& is) {
  std::size_t offset = 0;
  bin::expect_magic(is, kFlowMagic, offset);
  const auto h = bin::get<std::uint32_t>(is, offset);
  const auto w = bin::get<std::uint32_t>(is, offset);
  const auto unit = bin::get<std::uint32_t>(is, offset);
  if (unit > 1) throw FormatError("unknown flow unit tag " + std::to_string(unit));
  if (std::uint64_t{h} * w > (std::uint64_t{1} << 28)) throw FormatError("flow grid too large");
  FlowGrid g = FlowGrid::zeros(static_cast<int>(w), static_cast<int>(h), static_cast<FlowUnit>(unit));
  for (std::uint32_t j = 0; j < h; ++j) {
    for (std::uint32_t i = 0; i < w; ++i) {
      g.u(j, i) = bin::get<float>(is, offset);
      g.v(j, i) = bin::get<float>(is, offset);
    }
  }
  for (std::uint32_t j = 0; j < h; ++j)
    for (std::uint32_t i = 0; i < w; ++i) g.valid(j, i) = bin::get<std::uint8_t>(is, offset) ? 1 : 0;
  return g;
}

void write_flow_grid(const std::filesystem::path& path, const FlowGrid& g) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  write_flow_grid(os, g);
}

FlowGrid read_flow_grid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return read_flow_grid(is);
}

FlowGrid extract_flow_grid(const FlowNetParams& params, double t, const CameraIntrinsics& k, double t_span,
                           GridMode mode, double interval, const WarpConfig& cfg) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("grid time must lie in [0, 1]");
  if (!(t_span > 0.0)) throw DomainError("t_span must be positive");
  const Eigen::Index n = Eigen::Index{k.width} * k.height;
  Eigen::Matrix2Xd x(2, n);
  for (int j = 0; j < k.height; ++j)
    for (int i = 0; i < k.width; ++i) x.col(Eigen::Index{j} * k.width + i) = normalize_pixel({i, j}, k);

  Eigen::Matrix2Xd px(2, n);
  FlowGrid g;
  if (mode == GridMode::kInstantaneous) {
    Eigen::Matrix3Xd in(3, n);
    in.row(0).setConstant(t);
    in.bottomRows<2>() = x;
    const Eigen::Matrix2Xd u = net::forward_batch(params, in);
    px.row(0) = u.row(0) * (k.fx / t_span);
    px.row(1) = u.row(1) * (k.fy / t_span);
    g = FlowGrid::zeros(k.width, k.height, FlowUnit::kPixelsPerSecond);
  } else {
    const double t_end = t + interval;
    if (interval == 0.0 || !(t_end >= 0.0 && t_end <= 1.0)) throw DomainError("interval leaves [0, 1]");
    EventBatch batch{x, Eigen::VectorXd::Constant(n, t), {}};
    batch.index.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) batch.index[static_cast<std::size_t>(i)] = i;
    const Eigen::Matrix2Xd d = warp::integrate(params, batch, t_end, cfg).x_ref() - x;
    px.row(0) = d.row(0) * k.fx;
    px.row(1) = d.row(1) * k.fy;
    g = FlowGrid::zeros(k.width, k.height, FlowUnit::kPixelsPerInterval);
  }
  for (int j = 0; j < k.height; ++j) {
    for (int i = 0; i < k.width; ++i) {
      g.u(j, i) = px(0, Eigen::Index{j} * k.width + i);
      g.v(j, i) = px(1, Eigen::Index{j} * k.width + i);
    }
  }
  return g;
}

Mask event_mask(const std::vector<Event>& events, const CameraIntrinsics& k, double t0, double t1) {
  Mask m = Mask::Zero(k.height, k.width);
  for (const auto& e : events) {
    if (e.t < t0 || e.t > t1) continue;
    const long i = std::lround(e.x);
    const long j = std::lround(e.y);
    if (i >= 0 && j >= 0 && i < k.width && j < k.height) m(j, i) = 1;
  }
  return m;
}

MetricsReport flow_metrics(const FlowGrid& pred, const FlowGrid& gt, const Mask& mask) {
  if (pred.width() != gt.width() || pred.height() != gt.height() || mask.rows() != gt.height() ||
      mask.cols() != gt.width()) {
    throw ConfigError("flow grids and mask must have matching shapes");
  }
  MetricsReport r;
  Eigen::Index n_out = 0;
  for (int j = 0; j < gt.height(); ++j) {
    for (int i = 0; i < gt.width(); ++i) {
      if (!mask(j, i) || !pred.valid(j, i) || !gt.valid(j, i)) continue;
      const double du = pred.u(j, i) - gt.u(j, i);
      const double dv = pred.v(j, i) - gt.v(j, i);
      const double epe = std::hypot(du, dv);
      const Eigen::Vector3d a(pred.u(j, i), pred.v(j, i), 1.0);
      const Eigen::Vector3d b(gt.u(j, i), gt.v(j, i), 1.0);
      r.epe += epe;
      if (du != 0.0 || dv != 0.0) r.ae += std::atan2(a.cross(b).norm(), a.dot(b)) * kRadToDeg;
      if (epe > 3.0) ++n_out;
      ++r.n_valid;
    }
  }
  if (r.n_valid == 0) throw EmptyEvaluationError("no valid event-active pixels to evaluate");
  const double n = static_cast<double>(r.n_valid);
  r.epe /= n;
  r.ae /= n;
  r.out_pct = 100.0 * static_cast<double>(n_out) / n;
  return r;
}

MotionErrors motion_rms(const std::vector<Twist>& pred, const std::vector<Twist>& gt) {
  if (pred.size() != gt.size()) throw ConfigError("twist sample counts differ");
  if (pred.empty()) throw EmptyEvaluationError("no twist samples");
  double se_omega = 0.0, se_nu = 0.0, pg = 0.0, pp = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    se_omega += (pred[i].omega - gt[i].omega).squaredNorm();
    se_nu += (pred[i].nu - gt[i].nu).squaredNorm();
    pg += pred[i].nu.dot(gt[i].nu);
    pp += pred[i].nu.squaredNorm();
    gg += gt[i].nu.squaredNorm();
  }
  const double n = static_cast<double>(pred.size());
  MotionErrors e;
  e.rms_omega_deg = std::sqrt(se_omega / n) * kRadToDeg;
  e.rms_nu = std::sqrt(se_nu / n);
  e.nu_scale = pp > 0.0 ? std::max(0.0, pg / pp) : 0.0;
  double se_aligned = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) se_aligned += (e.nu_scale * pred[i].nu - gt[i].nu).squaredNorm();
  e.rms_nu_aligned = std::sqrt(se_aligned / n);
  e.nu_angle_deg = (pp > 0.0 && gg > 0.0)
                       ? std::acos(std::clamp(pg / std::sqrt(pp * gg), -1.0, 1.0)) * kRadToDeg
                       : std::numeric_limits<double>::quiet_NaN();
  return e;
}

}  // namespace emoflow
