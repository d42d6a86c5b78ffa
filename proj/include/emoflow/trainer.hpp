#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emoflow/events.hpp"
#include "emoflow/losses.hpp"
#include "emoflow/net.hpp"
#include "emoflow/optim.hpp"
#include "emoflow/spline.hpp"
#include "emoflow/warp.hpp"

namespace emoflow {

/// Every knob of the per-segment optimization. Schedule lengths always follow
/// n_iters; the total_iters field of the schedules is ignored.
struct TrainConfig {
  long n_iters = 1000;
  std::uint64_t seed = 0;
  WarpConfig warp;
  double sigma = 1.0;
  LossWeights weights;
  Eigen::Index neigh_size = 15000;
  Eigen::Index geom_sample_size = 2048;
  LrSchedule flow_lr{ScheduleKind::kExponential, 1e-4, 6.3e-5, 1000};
  LrSchedule motion_lr{ScheduleKind::kConstant, 1e-3, 1e-3, 1000};
  double flow_weight_decay = 1e-4;
  double motion_weight_decay = 0.0;
  std::optional<EarlyStopConfig> early_stop;
  int hidden_width = 256;
  double knot_init = 0.2;
  std::size_t segment_size = 30000;  // events per segment when splitting a stream

  void validate() const;
};

/// "mvsec" or "dsec"; throws ConfigError otherwise.
TrainConfig preset(const std::string& name);

/// Applies key=value pairs on top of `cfg`. Unknown keys throw ConfigError.
void apply_config(TrainConfig& cfg, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> parse_config(std::istream& is);
std::map<std::string, std::string> read_config(const std::filesystem::path& path);
void write_config(std::ostream& os, const TrainConfig& cfg);

struct IterRecord {
  long iter = 0;
  double flow_loss = 0.0;
  double geom_loss = 0.0;
  double total = 0.0;
  double lr_flow = 0.0;
  double lr_motion = 0.0;
};

enum class StopReason { kCompleted, kEarlyStop, kDiverged };
std::string to_string(StopReason r);

struct TrainReport {
  std::vector<IterRecord> history;
  StopReason stop_reason = StopReason::kCompleted;
  long diverged_at = -1;
  std::string message;
  double wall_seconds = 0.0;
  std::string checkpoint;  // path of the saved parameters, when written

  long iterations() const { return static_cast<long>(history.size()); }
  /// CSV "iter,flow_loss,geom_loss,total,lr_flow,lr_motion" at full precision.
  /// Wall time is left out so reruns compare byte for byte.
  void write_csv(std::ostream& os) const;
};

struct TrainResult {
  FlowNetParams params;
  MotionSpline spline;
  TrainReport report;
};

using IterCallback = std::function<void(const IterRecord&)>;

/// Optimizes a fresh network and spline on one segment. Divergence does not
/// throw: the result holds the last finite state and stop_reason kDiverged.
TrainResult train_segment(const NormalizedSegment& seg, const TrainConfig& cfg, const IterCallback& on_iter = {});
TrainResult train_segment(const EventSegment& seg, const TrainConfig& cfg, const IterCallback& on_iter = {});

struct SegmentOutcome {
  std::optional<TrainResult> result;
  std::string error;  // set when the segment could not be trained at all
  double t_start = 0.0;
};

/// Trains each segment independently from the same seed; a failure in one
/// segment is recorded and the rest still run.
std::vector<SegmentOutcome> run_sequence(const std::vector<EventSegment>& segments, const TrainConfig& cfg,
                                         const IterCallback& on_iter = {});

/// Per-segment trajectories on one physical time axis, a single header.
void write_sequence_trajectory(std::ostream& os, const std::vector<SegmentOutcome>& outcomes, double rate_hz);

}  // namespace emoflow
