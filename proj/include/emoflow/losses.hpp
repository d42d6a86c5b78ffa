#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "emoflow/events.hpp"
#include "emoflow/net.hpp"
#include "emoflow/rng.hpp"
#include "emoflow/spline.hpp"
#include "emoflow/warp.hpp"

namespace emoflow {

/// Image of warped events. image(row, col) = image(y, x); pixel centers sit on
/// integer coordinates.
struct Iwe {
  Eigen::MatrixXd image;
  double sigma = 1.0;
  Eigen::Index count = 0;    // events splatted
  Eigen::Index dropped = 0;  // events outside the 3 sigma padded frame
};

namespace iwe {

/// Splat every position (normalized coords, 2 x N) as a unit-mass Gaussian
/// truncated to a (2r+1)^2 window, r = 3 sigma.
Iwe rasterize(const Eigen::Matrix2Xd& x_n, const CameraIntrinsics& intrinsics, double sigma);
Iwe rasterize(const std::vector<WarpedEvent>& warped, const CameraIntrinsics& intrinsics, double sigma);

/// Chain dL/dI back to the splatted positions: returns dL/dx_n, 2 x N.
Eigen::Matrix2Xd position_gradient(const Eigen::Matrix2Xd& x_n, const CameraIntrinsics& intrinsics, double sigma,
                                   const Eigen::MatrixXd& d_image);

double variance(const Eigen::MatrixXd& image);

/// 16-bit binary PGM, scaled so the maximum maps to 65535.
void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& image);

}  // namespace iwe

struct VarianceLoss {
  double loss = 0.0;
  Eigen::MatrixXd grad;
};

/// -(1/HW) sum (I - mean)^2 and its gradient -(2/HW)(I - mean).
VarianceLoss variance_loss(const Eigen::MatrixXd& image);

struct LossWeights {
  double flow = 1.0;
  double geom = 0.25;
};

struct LossBreakdown {
  double flow_loss = 0.0;
  double geom_loss = 0.0;
  double total = 0.0;
  LossWeights weights;
};

struct FlowLossResult {
  double loss = 0.0;
  FlowNetParams grad;
  Eigen::Index dropped = 0;
};

/// Warps events [begin, end) to t_ref, rasterizes and evaluates the variance
/// loss; the gradient is taken through the warp back to the parameters.
FlowLossResult flow_loss_and_grad(const FlowNetParams& params, const NormalizedSegment& seg, double t_ref,
                                  Eigen::Index begin, Eigen::Index end, const WarpConfig& cfg, double sigma);

struct GeomLossResult {
  double loss = 0.0;
  FlowNetParams grad;
  KnotMatrix grad_knots = KnotMatrix::Zero();
};

/// Mean squared epipolar residual over the sampled events, with gradients
/// into both the network and the knots.
GeomLossResult geometric_loss_and_grad(const FlowNetParams& params, const MotionSpline& spline,
                                       const NormalizedSegment& seg, const std::vector<Eigen::Index>& sample);

/// One iteration's draw: a reference time, the K events nearest to it in time
/// (a contiguous range of the time-sorted segment), and the geometric sample.
struct SamplingPlan {
  double t_ref = 0.0;
  Eigen::Index neigh_begin = 0;
  Eigen::Index neigh_end = 0;
  std::vector<Eigen::Index> geom_sample;
};

/// Indices [begin, end) of the k events closest in time to t_ref; ties go to
/// the earlier event. `t` must be sorted.
std::pair<Eigen::Index, Eigen::Index> nearest_in_time(const Eigen::VectorXd& t, double t_ref, Eigen::Index k);

SamplingPlan draw_plan(const NormalizedSegment& seg, Eigen::Index neigh_size, Eigen::Index geom_sample_size,
                       CounterRng& rng);

struct TotalLossResult {
  LossBreakdown breakdown;
  FlowNetParams grad;
  KnotMatrix grad_knots = KnotMatrix::Zero();
  Eigen::Index dropped = 0;
};

/// w_flow L_flow + w_geom L_geom. Both terms are always evaluated so the
/// breakdown stays comparable across weightings.
TotalLossResult total_loss(const FlowNetParams& params, const MotionSpline& spline, const NormalizedSegment& seg,
                           const SamplingPlan& plan, const LossWeights& weights, const WarpConfig& cfg,
                           double sigma);

}  // namespace emoflow
