#pragma once

#include <string>

#include <Eigen/Core>

namespace emoflow {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// AdamW with decoupled decay: p *= (1 - lr wd), then the bias-corrected Adam step.
class AdamW {
 public:
  AdamW(Eigen::Index size, const AdamWConfig& cfg);

  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad, double lr);

  long steps() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }

 private:
  AdamWConfig cfg_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long step_ = 0;
};

enum class ScheduleKind { kConstant, kExponential, kCosine };

ScheduleKind parse_schedule_kind(const std::string& s);
std::string to_string(ScheduleKind k);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::kConstant;
  double lr_start = 1e-3;
  double lr_end = 1e-3;
  long total_iters = 1000;

  void validate() const;
};

/// Learning rate at iteration `iter` in [0, total_iters].
double lr_at(const LrSchedule& s, long iter);

struct EarlyStopConfig {
  long patience = 45;
  double min_delta = 1e-3;
  long warmup = 300;
};

/// Stops once the monitored loss has gone `patience` post-warmup iterations
/// without improving on the best value by at least min_delta.
class EarlyStop {
 public:
  explicit EarlyStop(const EarlyStopConfig& cfg);

  /// True when training should stop after this iteration.
  bool update(long iter, double loss);

  double best() const { return best_; }
  long stale() const { return stale_; }

 private:
  EarlyStopConfig cfg_;
  bool started_ = false;
  double best_ = 0.0;
  long stale_ = 0;
};

}  // namespace emoflow
