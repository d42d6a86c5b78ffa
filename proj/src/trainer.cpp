#include "emoflow/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "emoflow/error.hpp"
#include "emoflow/rng.hpp"

namespace emoflow {

void TrainConfig::validate() const {
  if (n_iters < 1) throw ConfigError("n_iters must be at least 1");
  warp.validate();
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (neigh_size < 1 || geom_sample_size < 1) throw ConfigError("sample sizes must be at least 1");
  if (hidden_width < 1) throw ConfigError("hidden_width must be at least 1");
  if (segment_size < 2) throw ConfigError("segment_size must be at least 2");
  flow_lr.validate();
  motion_lr.validate();
  if (early_stop) EarlyStop{*early_stop};
}

TrainConfig preset(const std::string& name) {
  TrainConfig cfg;
  if (name == "mvsec") return cfg;
  if (name == "dsec") {
    cfg.segment_size = 300000;
    cfg.flow_lr = {ScheduleKind::kCosine, 2e-3, 1e-7, cfg.n_iters};
    return cfg;
  }
  throw ConfigError("unknown preset: " + name);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid number for " + key + ": " + v);
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used == v.size()) return n;
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid integer for " + key + ": " + v);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("invalid boolean for " + key + ": " + v);
}

}  // namespace

void apply_config(TrainConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, v] : kv) {
    if (key == "n_iters") cfg.n_iters = to_long(key, v);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_long(key, v));
    else if (key == "solver") cfg.warp.solver = parse_solver(v);
    else if (key == "n_steps") cfg.warp.n_steps = static_cast<int>(to_long(key, v));
    else if (key == "backprop") cfg.warp.backprop = parse_backprop(v);
    else if (key == "sigma") cfg.sigma = to_double(key, v);
    else if (key == "w_flow") cfg.weights.flow = to_double(key, v);
    else if (key == "w_geom") cfg.weights.geom = to_double(key, v);
    else if (key == "neigh_size") cfg.neigh_size = to_long(key, v);
    else if (key == "geom_sample_size") cfg.geom_sample_size = to_long(key, v);
    else if (key == "flow_lr_kind") cfg.flow_lr.kind = parse_schedule_kind(v);
    else if (key == "flow_lr_start") cfg.flow_lr.lr_start = to_double(key, v);
    else if (key == "flow_lr_end") cfg.flow_lr.lr_end = to_double(key, v);
    else if (key == "motion_lr_kind") cfg.motion_lr.kind = parse_schedule_kind(v);
    else if (key == "motion_lr_start") cfg.motion_lr.lr_start = to_double(key, v);
    else if (key == "motion_lr_end") cfg.motion_lr.lr_end = to_double(key, v);
    else if (key == "flow_weight_decay") cfg.flow_weight_decay = to_double(key, v);
    else if (key == "motion_weight_decay") cfg.motion_weight_decay = to_double(key, v);
    else if (key == "early_stop") {
      if (to_bool(key, v)) {
        if (!cfg.early_stop) cfg.early_stop = EarlyStopConfig{};
      } else {
        cfg.early_stop.reset();
      }
    } else if (key == "patience" || key == "min_delta" || key == "warmup") {
      continue;  // applied below, once early_stop is settled
    } else if (key == "hidden_width") cfg.hidden_width = static_cast<int>(to_long(key, v));
    else if (key == "knot_init") cfg.knot_init = to_double(key, v);
    else if (key == "segment_size") cfg.segment_size = static_cast<std::size_t>(to_long(key, v));
    else throw ConfigError("unknown config key: " + key);
  }
  if (cfg.early_stop) {
    if (auto it = kv.find("patience"); it != kv.end()) cfg.early_stop->patience = to_long(it->first, it->second);
    if (auto it = kv.find("min_delta"); it != kv.end()) cfg.early_stop->min_delta = to_double(it->first, it->second);
    if (auto it = kv.find("warmup"); it != kv.end()) cfg.early_stop->warmup = to_long(it->first, it->second);
  }
}

std::map<std::string, std::string> parse_config(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", lineno);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> read_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config: " + path.string());
  return parse_config(is);
}

void write_config(std::ostream& os, const TrainConfig& cfg) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "n_iters=" << cfg.n_iters << '\n'
     << "seed=" << cfg.seed << '\n'
     << "solver=" << to_string(cfg.warp.solver) << '\n'
     << "n_steps=" << cfg.warp.n_steps << '\n'
     << "backprop=" << to_string(cfg.warp.backprop) << '\n'
     << "sigma=" << cfg.sigma << '\n'
     << "w_flow=" << cfg.weights.flow << '\n'
     << "w_geom=" << cfg.weights.geom << '\n'
     << "neigh_size=" << cfg.neigh_size << '\n'
     << "geom_sample_size=" << cfg.geom_sample_size << '\n'
     << "flow_lr_kind=" << to_string(cfg.flow_lr.kind) << '\n'
     << "flow_lr_start=" << cfg.flow_lr.lr_start << '\n'
     << "flow_lr_end=" << cfg.flow_lr.lr_end << '\n'
     << "motion_lr_kind=" << to_string(cfg.motion_lr.kind) << '\n'
     << "motion_lr_start=" << cfg.motion_lr.lr_start << '\n'
     << "motion_lr_end=" << cfg.motion_lr.lr_end << '\n'
     << "flow_weight_decay=" << cfg.flow_weight_decay << '\n'
     << "motion_weight_decay=" << cfg.motion_weight_decay << '\n'
     << "early_stop=" << (cfg.early_stop ? "true" : "false") << '\n';
  const EarlyStopConfig es = cfg.early_stop.value_or(EarlyStopConfig{});
  os << "patience=" << es.patience << '\n'
     << "min_delta=" << es.min_delta << '\n'
     << "warmup=" << es.warmup << '\n'
     << "hidden_width=" << cfg.hidden_width << '\n'
     << "knot_init=" << cfg.knot_init << '\n'
     << "segment_size=" << cfg.segment_size << '\n';
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::kCompleted:
      return "completed";
    case StopReason::kEarlyStop:
      return "early_stop";
    case StopReason::kDiverged:
      return "diverged";
  }
  return "completed";
}

void TrainReport::write_csv(std::ostream& os) const {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "iter,flow_loss,geom_loss,total,lr_flow,lr_motion\n";
  for (const auto& r : history) {
    os << r.iter << ',' << r.flow_loss << ',' << r.geom_loss << ',' << r.total << ',' << r.lr_flow << ','
       << r.lr_motion << '\n';
  }
}

TrainResult train_segment(const NormalizedSegment& seg, const TrainConfig& cfg, const IterCallback& on_iter) {
  cfg.validate();
  if (seg.size() == 0) throw DegenerateError("cannot train on an empty segment");
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult res{net::init_params(cfg.seed, cfg.hidden_width), MotionSpline::constant(cfg.knot_init, seg.t_span), {}};
  LrSchedule flow_sched = cfg.flow_lr;
  LrSchedule motion_sched = cfg.motion_lr;
  flow_sched.total_iters = motion_sched.total_iters = cfg.n_iters;

  AdamW net_opt(res.params.size(), {0.9, 0.999, 1e-8, cfg.flow_weight_decay});
  AdamW knot_opt(res.spline.knots.size(), {0.9, 0.999, 1e-8, cfg.motion_weight_decay});
  std::optional<EarlyStop> stopper;
  if (cfg.early_stop) stopper.emplace(*cfg.early_stop);
  CounterRng rng(cfg.seed, /*stream=*/1);

  auto diverge = [&](long iter, const std::string& why) {
    res.report.stop_reason = StopReason::kDiverged;
    res.report.diverged_at = iter;
    res.report.message = why;
  };

  for (long it = 0; it < cfg.n_iters; ++it) {
    const double lr_flow = lr_at(flow_sched, it);
    const double lr_motion = lr_at(motion_sched, it);
    const SamplingPlan plan = draw_plan(seg, cfg.neigh_size, cfg.geom_sample_size, rng);

    std::optional<TotalLossResult> loss;
    try {
      loss = total_loss(res.params, res.spline, seg, plan, cfg.weights, cfg.warp, cfg.sigma);
    } catch (const DivergenceError& e) {
      diverge(it, e.what());
      break;
    }
    const LossBreakdown& b = loss->breakdown;
    if (!std::isfinite(b.total) || !loss->grad.flat().allFinite() || !loss->grad_knots.allFinite()) {
      diverge(it, "non-finite loss or gradient");
      break;
    }
    const IterRecord rec{it, b.flow_loss, b.geom_loss, b.total, lr_flow, lr_motion};
    res.report.history.push_back(rec);
    if (on_iter) on_iter(rec);

    const Eigen::VectorXd last_params = res.params.flat();
    const KnotMatrix last_knots = res.spline.knots;
    net_opt.step(res.params.flat(), loss->grad.flat(), lr_flow);
    Eigen::Map<Eigen::VectorXd> knots(res.spline.knots.data(), res.spline.knots.size());
    const Eigen::Map<const Eigen::VectorXd> gk(loss->grad_knots.data(), loss->grad_knots.size());
    knot_opt.step(knots, gk, lr_motion);
    if (!res.params.flat().allFinite() || !res.spline.knots.allFinite()) {
      res.params.flat() = last_params;
      res.spline.knots = last_knots;
      diverge(it, "non-finite parameters after update");
      break;
    }
    if (stopper && stopper->update(it, b.total)) {
      res.report.stop_reason = StopReason::kEarlyStop;
      break;
    }
  }
  res.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

TrainResult train_segment(const EventSegment& seg, const TrainConfig& cfg, const IterCallback& on_iter) {
  return train_segment(normalize_segment(seg), cfg, on_iter);
}

std::vector<SegmentOutcome> run_sequence(const std::vector<EventSegment>& segments, const TrainConfig& cfg,
                                         const IterCallback& on_iter) {
  if (segments.empty()) throw ConfigError("run_sequence needs at least one segment");
  std::vector<SegmentOutcome> out;
  out.reserve(segments.size());
  for (const auto& seg : segments) {
    SegmentOutcome o;
    o.t_start = seg.t_start;
    try {
      o.result = train_segment(seg, cfg, on_iter);
    } catch (const Error& e) {
      o.error = e.what();
    }
    out.push_back(std::move(o));
  }
  return out;
}

void write_sequence_trajectory(std::ostream& os, const std::vector<SegmentOutcome>& outcomes, double rate_hz) {
  os << "t,wx,wy,wz,vx,vy,vz\n";
  for (const auto& o : outcomes) {
    if (o.result) spline::write_trajectory_csv(os, o.result->spline, o.t_start, rate_hz, /*header=*/false);
  }
}

}  // namespace emoflow
