#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "emoflow/events.hpp"
#include "emoflow/geometry.hpp"
#include "emoflow/net.hpp"
#include "emoflow/warp.hpp"

namespace emoflow {

using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

enum class FlowUnit : std::uint32_t { kPixelsPerSecond = 0, kPixelsPerInterval = 1 };

/// Dense flow in pixels, indexed (row, col) = (y, x).
struct FlowGrid {
  FlowUnit unit = FlowUnit::kPixelsPerSecond;
  Eigen::MatrixXd u;
  Eigen::MatrixXd v;
  Mask valid;

  int width() const { return static_cast<int>(u.cols()); }
  int height() const { return static_cast<int>(u.rows()); }

  static FlowGrid zeros(int width, int height, FlowUnit unit);
};

/// FLW1: magic, H and W (u32), unit tag (u32), row-major interleaved (u, v)
/// as LE float32, then H*W mask bytes.
void write_flow_grid(std::ostream& os, const FlowGrid& g);
FlowGrid read_flow_grid(std::istream& is);
void write_flow_grid(const std::filesystem::path& path, const FlowGrid& g);
FlowGrid read_flow_grid(const std::filesystem::path& path);

enum class GridMode { kInstantaneous, kDisplacement };

/// Instantaneous: the network at normalized time t, in pixels per second
/// (t_span seconds per unit of normalized time). Displacement: each pixel
/// warped from t to t + interval, in pixels per interval.
FlowGrid extract_flow_grid(const FlowNetParams& params, double t, const CameraIntrinsics& intrinsics,
                           double t_span, GridMode mode, double interval = 1.0, const WarpConfig& cfg = {});

/// Pixels hit by at least one event with t in [t0, t1], by nearest pixel.
Mask event_mask(const std::vector<Event>& events, const CameraIntrinsics& intrinsics, double t0, double t1);

struct MetricsReport {
  double epe = 0.0;
  double ae = 0.0;       // degrees
  double out_pct = 0.0;  // share of pixels with EPE > 3 px, percent
  Eigen::Index n_valid = 0;
};

/// Over pixels valid in both grids and set in `mask`. AE is the angle between
/// (u, v, 1) vectors. Throws EmptyEvaluationError when nothing is left.
MetricsReport flow_metrics(const FlowGrid& pred, const FlowGrid& gt, const Mask& mask);

struct MotionErrors {
  double rms_omega_deg = 0.0;   // deg/s
  double rms_nu = 0.0;          // m/s, raw
  double rms_nu_aligned = 0.0;  // after the best non-negative scale on pred nu
  double nu_scale = 0.0;
  double nu_angle_deg = 0.0;    // angle between stacked nu vectors; NaN if either is zero
};

/// RMS of per-sample error norms over aligned per-second twist samples.
MotionErrors motion_rms(const std::vector<Twist>& pred, const std::vector<Twist>& gt);

}  // namespace emoflow
