#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "emoflow/events.hpp"
#include "emoflow/net.hpp"

namespace emoflow {

enum class Solver { kEuler, kRk4 };
enum class Backprop { kDirect, kAdjoint };

struct WarpConfig {
  Solver solver = Solver::kEuler;
  int n_steps = 8;  // steps per unit of normalized time
  Backprop backprop = Backprop::kAdjoint;

  void validate() const;
};

Solver parse_solver(const std::string& s);
Backprop parse_backprop(const std::string& s);
std::string to_string(Solver s);
std::string to_string(Backprop b);

struct WarpedEvent {
  Eigen::Vector2d x_ref = Eigen::Vector2d::Zero();
  Eigen::Index src_index = 0;
  double t_src = 0.0;
};

/// Events to transport, in normalized coordinates. `index` maps columns back
/// to positions in the source segment.
struct EventBatch {
  Eigen::Matrix2Xd x;
  Eigen::VectorXd t;
  std::vector<Eigen::Index> index;

  Eigen::Index size() const { return t.size(); }
};

EventBatch make_batch(const NormalizedSegment& seg, Eigen::Index begin, Eigen::Index end);
EventBatch make_batch(const NormalizedSegment& seg, const std::vector<Eigen::Index>& indices);

namespace warp {

/// max(1, ceil(n_steps |dt|)).
int step_count(double dt, int n_steps);

/// Forward integration record: final positions plus the solver nodes needed by
/// either backward pass. Events are processed in fixed chunks sorted by step
/// count, so every step acts on a prefix of its chunk.
class Trajectories {
 public:
  /// 2 x N warped positions, in batch order.
  const Eigen::Matrix2Xd& x_ref() const { return x_ref_; }
  const EventBatch& batch() const { return batch_; }
  double t_ref() const { return t_ref_; }
  const WarpConfig& config() const { return cfg_; }
  std::vector<WarpedEvent> events() const;

 private:
  friend Trajectories integrate(const FlowNetParams&, const EventBatch&, double, const WarpConfig&);
  friend FlowNetParams backward_direct(const FlowNetParams&, const Trajectories&, const Eigen::Matrix2Xd&);
  friend FlowNetParams backward_adjoint(const FlowNetParams&, const Trajectories&, const Eigen::Matrix2Xd&);

  struct Chunk {
    std::vector<Eigen::Index> cols;  // batch columns, by descending step count
    Eigen::VectorXi steps;
    Eigen::VectorXd h;               // signed step size
    Eigen::VectorXd t0;
    std::vector<Eigen::Matrix2Xd> nodes;  // nodes[j]: positions before step j (active prefix)
  };

  EventBatch batch_;
  double t_ref_ = 0.0;
  WarpConfig cfg_;
  Eigen::Matrix2Xd x_ref_;
  std::vector<Chunk> chunks_;
};

/// Integrates dx/dt = net(t, x) from each event's time to t_ref. Throws
/// DivergenceError (index = segment index) on a non-finite position.
Trajectories integrate(const FlowNetParams& params, const EventBatch& batch, double t_ref, const WarpConfig& cfg);

std::vector<WarpedEvent> warp_to(const FlowNetParams& params, const EventBatch& batch, double t_ref,
                                 const WarpConfig& cfg);

/// Gradient of sum_k upstream_k . x_ref_k with respect to the parameters, by
/// reverse-mode through the recorded solver steps.
FlowNetParams backward_direct(const FlowNetParams& params, const Trajectories& traj,
                              const Eigen::Matrix2Xd& upstream);

/// Same gradient via the adjoint state. Euler reuses the forward nodes, which
/// makes it agree with backward_direct to round-off; RK4 integrates the
/// augmented (x, a, dL/dtheta) system backward from t_ref.
FlowNetParams backward_adjoint(const FlowNetParams& params, const Trajectories& traj,
                               const Eigen::Matrix2Xd& upstream);

/// Dispatches on traj.config().backprop.
FlowNetParams backward(const FlowNetParams& params, const Trajectories& traj, const Eigen::Matrix2Xd& upstream);

}  // namespace warp
}  // namespace emoflow
