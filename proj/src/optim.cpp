#include "emoflow/optim.hpp"

#include <cmath>
#include <numbers>

#include "emoflow/error.hpp"

namespace emoflow {

AdamW::AdamW(Eigen::Index size, const AdamWConfig& cfg)
    : cfg_(cfg), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void AdamW::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ConfigError("AdamW: size mismatch");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
  if (cfg_.weight_decay != 0.0) params *= 1.0 - lr * cfg_.weight_decay;
  params.array() -= (lr / bc1) * m_.array() / ((v_.array() / bc2).sqrt() + cfg_.eps);
}

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "constant") return ScheduleKind::kConstant;
  if (s == "exponential") return ScheduleKind::kExponential;
  if (s == "cosine") return ScheduleKind::kCosine;
  throw ConfigError("unknown schedule: " + s);
}

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kConstant:
      return "constant";
    case ScheduleKind::kExponential:
      return "exponential";
    case ScheduleKind::kCosine:
      return "cosine";
  }
  return "constant";
}

void LrSchedule::validate() const {
  if (!(lr_start > 0.0) || !(lr_end > 0.0)) throw ConfigError("learning rates must be positive");
  if (total_iters < 1) throw ConfigError("schedule length must be positive");
}

double lr_at(const LrSchedule& s, long iter) {
  const double f = static_cast<double>(iter) / static_cast<double>(s.total_iters);
  switch (s.kind) {
    case ScheduleKind::kConstant:
      return s.lr_start;
    case ScheduleKind::kExponential:
      return s.lr_start * std::pow(s.lr_end / s.lr_start, f);
    case ScheduleKind::kCosine:
      return s.lr_end + 0.5 * (s.lr_start - s.lr_end) * (1.0 + std::cos(std::numbers::pi * f));
  }
  return s.lr_start;
}

EarlyStop::EarlyStop(const EarlyStopConfig& cfg) : cfg_(cfg) {
  if (cfg.patience < 1) throw ConfigError("patience must be at least 1");
  if (cfg.min_delta < 0.0 || cfg.warmup < 0) throw ConfigError("invalid early-stop configuration");
}

bool EarlyStop::update(long iter, double loss) {
  if (iter < cfg_.warmup) return false;
  if (!started_) {
    started_ = true;
    best_ = loss;
    stale_ = 0;
    return false;
  }
  if (best_ - loss >= cfg_.min_delta) {
    best_ = loss;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= cfg_.patience;
}

}  // namespace emoflow
