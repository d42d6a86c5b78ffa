#include "emoflow/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "emoflow/error.hpp"
#include "emoflow/geometry.hpp"

namespace emoflow {

namespace iwe {

namespace {

// Pixel window [lo, hi] covered by a splat centred at c, clipped to [0, n).
struct Window {
  int lo = 0;
  int hi = -1;
};

Window window(double c, double r, int n) {
  return {std::max(0, static_cast<int>(std::ceil(c - r))), std::min(n - 1, static_cast<int>(std::floor(c + r)))};
}

bool inside_padded(double px, double py, double r, const CameraIntrinsics& k) {
  return std::isfinite(px) && std::isfinite(py) && px >= -r && py >= -r && px <= k.width - 1 + r &&
         py <= k.height - 1 + r;
}

}  // namespace

Iwe rasterize(const Eigen::Matrix2Xd& x_n, const CameraIntrinsics& k, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
  Iwe out;
  out.sigma = sigma;
  out.image = Eigen::MatrixXd::Zero(k.height, k.width);
  const double r = 3.0 * sigma;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double norm = 1.0 / (2.0 * std::numbers::pi * sigma * sigma);
  for (Eigen::Index e = 0; e < x_n.cols(); ++e) {
    const double px = k.fx * x_n(0, e) + k.cx;
    const double py = k.fy * x_n(1, e) + k.cy;
    if (!inside_padded(px, py, r, k)) {
      ++out.dropped;
      continue;
    }
    ++out.count;
    const Window wx = window(px, r, k.width);
    const Window wy = window(py, r, k.height);
    for (int j = wy.lo; j <= wy.hi; ++j) {
      const double dy = j - py;
      for (int i = wx.lo; i <= wx.hi; ++i) {
        const double dx = i - px;
        out.image(j, i) += norm * std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
    }
  }
  return out;
}

Iwe rasterize(const std::vector<WarpedEvent>& warped, const CameraIntrinsics& k, double sigma) {
  Eigen::Matrix2Xd x(2, static_cast<Eigen::Index>(warped.size()));
  for (std::size_t i = 0; i < warped.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = warped[i].x_ref;
  return rasterize(x, k, sigma);
}

Eigen::Matrix2Xd position_gradient(const Eigen::Matrix2Xd& x_n, const CameraIntrinsics& k, double sigma,
                                   const Eigen::MatrixXd& d_image) {
  if (d_image.rows() != k.height || d_image.cols() != k.width) throw ConfigError("gradient image has wrong shape");
  Eigen::Matrix2Xd out = Eigen::Matrix2Xd::Zero(2, x_n.cols());
  const double r = 3.0 * sigma;
  const double inv_s2 = 1.0 / (sigma * sigma);
  const double inv2s2 = 0.5 * inv_s2;
  const double norm = 1.0 / (2.0 * std::numbers::pi * sigma * sigma);
  for (Eigen::Index e = 0; e < x_n.cols(); ++e) {
    const double px = k.fx * x_n(0, e) + k.cx;
    const double py = k.fy * x_n(1, e) + k.cy;
    if (!inside_padded(px, py, r, k)) continue;
    const Window wx = window(px, r, k.width);
    const Window wy = window(py, r, k.height);
    double gx = 0.0;
    double gy = 0.0;
    for (int j = wy.lo; j <= wy.hi; ++j) {
      const double dy = j - py;
      for (int i = wx.lo; i <= wx.hi; ++i) {
        const double dx = i - px;
        const double w = d_image(j, i) * norm * std::exp(-(dx * dx + dy * dy) * inv2s2) * inv_s2;
        gx += w * dx;
        gy += w * dy;
      }
    }
    out(0, e) = k.fx * gx;
    out(1, e) = k.fy * gy;
  }
  return out;
}

double variance(const Eigen::MatrixXd& image) {
  const double mean = image.mean();
  return (image.array() - mean).square().mean();
}

void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& image) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << "P5\n" << image.cols() << ' ' << image.rows() << "\n65535\n";
  const double peak = image.size() ? image.maxCoeff() : 0.0;
  const double scale = peak > 0.0 ? 65535.0 / peak : 0.0;
  for (Eigen::Index j = 0; j < image.rows(); ++j) {
    for (Eigen::Index i = 0; i < image.cols(); ++i) {
      const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(image(j, i) * scale, 0.0, 65535.0)));
      os.put(static_cast<char>(v >> 8));
      os.put(static_cast<char>(v & 0xff));
    }
  }
}

}  // namespace iwe

VarianceLoss variance_loss(const Eigen::MatrixXd& image) {
  if (image.size() == 0) throw ConfigError("variance loss of an empty image");
  const double n = static_cast<double>(image.size());
  const Eigen::ArrayXXd centred = image.array() - image.mean();
  return {-centred.square().sum() / n, (-2.0 / n) * centred.matrix()};
}

FlowLossResult flow_loss_and_grad(const FlowNetParams& params, const NormalizedSegment& seg, double t_ref,
                                  Eigen::Index begin, Eigen::Index end, const WarpConfig& cfg, double sigma) {
  if (end <= begin) throw ConfigError("flow loss needs a non-empty neighbourhood");
  const warp::Trajectories traj = warp::integrate(params, make_batch(seg, begin, end), t_ref, cfg);
  const Iwe image = iwe::rasterize(traj.x_ref(), seg.intrinsics, sigma);
  const VarianceLoss vl = variance_loss(image.image);
  const Eigen::Matrix2Xd up = iwe::position_gradient(traj.x_ref(), seg.intrinsics, sigma, vl.grad);
  return {vl.loss, warp::backward(params, traj, up), image.dropped};
}

GeomLossResult geometric_loss_and_grad(const FlowNetParams& params, const MotionSpline& spline,
                                       const NormalizedSegment& seg, const std::vector<Eigen::Index>& sample) {
  if (sample.empty()) throw ConfigError("geometric loss needs a non-empty sample");
  const auto n = static_cast<Eigen::Index>(sample.size());
  Eigen::Matrix3Xd in(3, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index i = sample[static_cast<std::size_t>(j)];
    if (i < 0 || i >= seg.size()) throw ConfigError("sample index out of bounds");
    in(0, j) = seg.t(i);
    in.block<2, 1>(1, j) = seg.x.col(i);
  }
  ForwardCache cache;
  const Eigen::Matrix2Xd u = net::forward_batch(params, in, &cache);

  GeomLossResult out{0.0, FlowNetParams(params.hidden_width()), KnotMatrix::Zero()};
  Eigen::Matrix2Xd upstream(2, n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double t = in(0, j);
    const geometry::Residual res =
        geometry::geometric_residual(u.col(j), {in(1, j), in(2, j)}, spline::velocity(spline, t));
    out.loss += res.r * res.r * inv_n;
    const double dr = 2.0 * res.r * inv_n;
    upstream.col(j) = dr * res.d_u;
    const Eigen::Vector4d b = spline::basis(t);
    for (int k = 0; k < 4; ++k) {
      out.grad_knots.block<1, 3>(k, 0) += (dr * b(k)) * res.d_omega.transpose();
      out.grad_knots.block<1, 3>(k, 3) += (dr * b(k)) * res.d_nu.transpose();
    }
  }
  net::backward_batch(params, cache, upstream, &out.grad);
  return out;
}

std::pair<Eigen::Index, Eigen::Index> nearest_in_time(const Eigen::VectorXd& t, double t_ref, Eigen::Index k) {
  const Eigen::Index n = t.size();
  k = std::clamp<Eigen::Index>(k, 0, n);
  Eigen::Index lo = std::lower_bound(t.data(), t.data() + n, t_ref) - t.data();
  Eigen::Index hi = lo;
  while (hi - lo < k) {
    if (lo > 0 && (hi == n || t_ref - t(lo - 1) <= t(hi) - t_ref)) {
      --lo;
    } else {
      ++hi;
    }
  }
  return {lo, hi};
}

SamplingPlan draw_plan(const NormalizedSegment& seg, Eigen::Index neigh_size, Eigen::Index geom_sample_size,
                       CounterRng& rng) {
  if (seg.size() == 0) throw ConfigError("cannot sample an empty segment");
  if (neigh_size < 1 || geom_sample_size < 1) throw ConfigError("sample sizes must be positive");
  SamplingPlan plan;
  plan.t_ref = rng.uniform();
  std::tie(plan.neigh_begin, plan.neigh_end) = nearest_in_time(seg.t, plan.t_ref, neigh_size);
  plan.geom_sample.resize(static_cast<std::size_t>(geom_sample_size));
  for (auto& i : plan.geom_sample) i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(seg.size())));
  return plan;
}

TotalLossResult total_loss(const FlowNetParams& params, const MotionSpline& spline, const NormalizedSegment& seg,
                           const SamplingPlan& plan, const LossWeights& weights, const WarpConfig& cfg,
                           double sigma) {
  FlowLossResult flow = flow_loss_and_grad(params, seg, plan.t_ref, plan.neigh_begin, plan.neigh_end, cfg, sigma);
  const GeomLossResult geom = geometric_loss_and_grad(params, spline, seg, plan.geom_sample);

  TotalLossResult out{{flow.loss, geom.loss, weights.flow * flow.loss + weights.geom * geom.loss, weights},
                      std::move(flow.grad), weights.geom * geom.grad_knots, flow.dropped};
  out.grad.flat() *= weights.flow;
  out.grad.flat() += weights.geom * geom.grad.flat();
  return out;
}

}  // namespace emoflow
