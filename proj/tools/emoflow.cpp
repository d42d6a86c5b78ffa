// emoflow command-line front end: synth, train, eval, viz, selftest.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emoflow/error.hpp"
#include "emoflow/events.hpp"
#include "emoflow/geometry.hpp"
#include "emoflow/losses.hpp"
#include "emoflow/metrics.hpp"
#include "emoflow/net.hpp"
#include "emoflow/selftest.hpp"
#include "emoflow/spline.hpp"
#include "emoflow/synth.hpp"
#include "emoflow/trainer.hpp"
#include "emoflow/viz.hpp"
#include "emoflow/warp.hpp"

namespace fs = std::filesystem;
using namespace emoflow;

namespace {

constexpr int kUsage = 2;
constexpr int kDiverged = 3;

fs::path sidecar(const fs::path& events, const std::string& suffix) { return fs::path(events.string() + suffix); }

std::vector<double> triple_or_empty(const std::vector<double>& v, const char* name) {
  if (!v.empty() && v.size() != 3) throw ConfigError(std::string(name) + " takes three values");
  return v;
}

// ---- synth ----

struct SynthArgs {
  std::string preset = "joint";
  std::vector<double> omega, nu;
  fs::path out = "scene.evt";
  SceneSpec scene;
};

int cmd_synth(const SynthArgs& a) {
  Twist tw = synth::preset_twist(a.preset);
  if (const auto o = triple_or_empty(a.omega, "--omega"); !o.empty()) tw.omega = {o[0], o[1], o[2]};
  if (const auto n = triple_or_empty(a.nu, "--nu"); !n.empty()) tw.nu = {n[0], n[1], n[2]};
  const SynthOutput s = generate(a.scene, constant_motion(tw, a.scene.duration));
  const CameraIntrinsics& k = a.scene.intrinsics;
  write_events(a.out, s.events, format_from_path(a.out), static_cast<std::uint32_t>(k.width),
               static_cast<std::uint32_t>(k.height));
  write_intrinsics(sidecar(a.out, ".intr"), k);
  synth::write_scene(sidecar(a.out, ".scene"), s.gt);
  write_flow_grid(sidecar(a.out, ".gt.flw"), synth::gt_displacement_grid(s.gt, 0.0, a.scene.duration));
  {
    std::ofstream traj(sidecar(a.out, ".gt_traj.csv"));
    spline::write_trajectory_csv(traj, s.gt.motion, 0.0, 1000.0);
  }
  std::cout << "events: " << s.events.size() << "\nduration: " << a.scene.duration << " s\n";
  return 0;
}

// ---- train ----

struct TrainArgs {
  fs::path events;
  fs::path intrinsics;
  std::string preset = "mvsec";
  fs::path config;
  fs::path out = "train_out";
  std::optional<std::uint64_t> seed;
  std::optional<long> iters;
  bool early_stop = false;
  std::optional<double> w_geom, w_flow, sigma, knot_init;
  std::optional<std::string> solver, backprop;
  std::optional<int> steps, hidden;
  std::optional<long> neigh, geom_sample, segment_size;
  bool quiet = false;
};

TrainConfig resolve_config(const TrainArgs& a) {
  TrainConfig cfg = preset(a.preset);
  if (!a.config.empty()) apply_config(cfg, read_config(a.config));
  std::map<std::string, std::string> kv;
  if (a.seed) kv["seed"] = std::to_string(*a.seed);
  if (a.iters) kv["n_iters"] = std::to_string(*a.iters);
  if (a.early_stop) kv["early_stop"] = "true";
  if (a.solver) kv["solver"] = *a.solver;
  if (a.backprop) kv["backprop"] = *a.backprop;
  if (a.steps) kv["n_steps"] = std::to_string(*a.steps);
  if (a.hidden) kv["hidden_width"] = std::to_string(*a.hidden);
  if (a.neigh) kv["neigh_size"] = std::to_string(*a.neigh);
  if (a.geom_sample) kv["geom_sample_size"] = std::to_string(*a.geom_sample);
  if (a.segment_size) kv["segment_size"] = std::to_string(*a.segment_size);
  apply_config(cfg, kv);
  // Doubles go in directly so flag values keep full precision.
  if (a.w_geom) cfg.weights.geom = *a.w_geom;
  if (a.w_flow) cfg.weights.flow = *a.w_flow;
  if (a.sigma) cfg.sigma = *a.sigma;
  if (a.knot_init) cfg.knot_init = *a.knot_init;
  cfg.validate();
  return cfg;
}

std::vector<EventSegment> load_segments(const fs::path& events, const fs::path& intr, std::size_t segment_size) {
  const auto evs = read_events(events, format_from_path(events));
  const CameraIntrinsics k = read_intrinsics(intr.empty() ? sidecar(events, ".intr") : intr);
  if (evs.size() < 2) throw DegenerateError("event file holds fewer than two events");
  if (evs.size() < segment_size) {
    std::cerr << "note: " << evs.size() << " events is less than one segment of " << segment_size
              << "; training on the whole stream as one segment\n";
    return segment_stream(evs, evs.size(), k);
  }
  return segment_stream(evs, segment_size, k);
}

int cmd_train(const TrainArgs& a) {
  const TrainConfig cfg = resolve_config(a);
  const auto segments = load_segments(a.events, a.intrinsics, cfg.segment_size);
  fs::create_directories(a.out);
  {
    std::ofstream os(a.out / "config.txt");
    write_config(os, cfg);
  }
  IterCallback progress;
  if (!a.quiet) {
    progress = [](const IterRecord& r) {
      if (r.iter % 50 == 0) {
        std::fprintf(stderr, "iter %5ld  flow %.6g  geom %.6g  total %.6g\n", r.iter, r.flow_loss, r.geom_loss,
                     r.total);
      }
    };
  }
  const auto outcomes = run_sequence(segments, cfg, progress);
  std::ofstream index(a.out / "segments.csv");
  index.precision(17);
  index << "segment,t_start,t_end,stop_reason,iterations,wall_seconds\n";
  int exit_code = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    const std::string stem = "seg" + std::to_string(i);
    if (!o.result) {
      std::cerr << "segment " << i << " failed: " << o.error << '\n';
      exit_code = std::max(exit_code, 1);
      continue;
    }
    const TrainResult& r = *o.result;
    net::save_checkpoint(a.out / (stem + ".emf"), r.params);
    std::ofstream(a.out / (stem + ".knots")) << [&] {
      std::ostringstream os;
      spline::write_knots(os, r.spline);
      return os.str();
    }();
    std::ofstream rep(a.out / (stem + "_report.csv"));
    r.report.write_csv(rep);
    index << i << ',' << segments[i].t_start << ',' << segments[i].t_end << ',' << to_string(r.report.stop_reason)
          << ',' << r.report.iterations() << ',' << r.report.wall_seconds << '\n';
    std::cout << "segment " << i << ": " << to_string(r.report.stop_reason) << " after " << r.report.iterations()
              << " iterations";
    if (!r.report.history.empty()) std::cout << ", final total loss " << r.report.history.back().total;
    std::cout << '\n';
    if (r.report.stop_reason == StopReason::kDiverged) {
      std::cerr << "segment " << i << " diverged at iteration " << r.report.diverged_at << ": " << r.report.message
                << '\n';
      exit_code = kDiverged;
    }
  }
  std::ofstream traj(a.out / "trajectory.csv");
  write_sequence_trajectory(traj, outcomes, 1000.0);
  return exit_code;
}

// ---- shared run loading ----

struct RunSegment {
  FlowNetParams params;
  MotionSpline spline;
  double t_start = 0.0;
  double t_end = 0.0;
};

RunSegment load_run(const fs::path& dir, int segment) {
  std::ifstream index(dir / "segments.csv");
  if (!index) throw ConfigError("no segments.csv in " + dir.string());
  std::string line;
  std::getline(index, line);
  while (std::getline(index, line)) {
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(row, field, ',')) f.push_back(field);
    if (f.size() < 3 || std::stoi(f[0]) != segment) continue;
    const std::string stem = "seg" + std::to_string(segment);
    std::ifstream knots(dir / (stem + ".knots"));
    if (!knots) throw ConfigError("missing knots for segment " + std::to_string(segment));
    return {net::load_checkpoint(dir / (stem + ".emf")), spline::read_knots(knots), std::stod(f[1]),
            std::stod(f[2])};
  }
  throw ConfigError("segment " + std::to_string(segment) + " not found in " + dir.string());
}

NormalizedSegment segment_from_events(const std::vector<Event>& evs, const CameraIntrinsics& k, double t0,
                                      double t1) {
  EventSegment seg;
  seg.intrinsics = k;
  seg.t_start = t0;
  seg.t_end = t1;
  for (const auto& e : evs)
    if (e.t >= t0 && e.t <= t1) seg.events.push_back(e);
  if (seg.events.empty()) throw EmptyEvaluationError("no events inside the segment window");
  return normalize_segment(seg);
}

// ---- eval ----

struct EvalArgs {
  fs::path run;
  int segment = 0;
  fs::path scene;
  fs::path gt_grid;
  fs::path events;
  double t0 = 0.0;
  std::optional<double> dt;
  bool instantaneous = false;
  fs::path save_grid;
  fs::path out;
  std::string solver = "euler";
  int steps = 8;
};

int cmd_eval(const EvalArgs& a) {
  const RunSegment run = load_run(a.run, a.segment);
  const double span = run.t_end - run.t_start;
  std::optional<GroundTruth> gt;
  if (!a.scene.empty()) gt = synth::read_scene(a.scene);
  if (!gt && a.gt_grid.empty()) throw ConfigError("eval needs --scene or --gt-grid");
  CameraIntrinsics k;
  if (gt) k = gt->scene.intrinsics;
  else if (!a.events.empty()) k = read_intrinsics(sidecar(a.events, ".intr"));

  WarpConfig wc;
  wc.solver = parse_solver(a.solver);
  wc.n_steps = a.steps;
  const double interval = a.dt.value_or(1.0 - a.t0);
  const GridMode mode = a.instantaneous ? GridMode::kInstantaneous : GridMode::kDisplacement;

  FlowGrid gt_grid;
  if (!a.gt_grid.empty()) {
    gt_grid = read_flow_grid(a.gt_grid);
    if (k.width == 0) throw ConfigError("--gt-grid needs --events (for intrinsics) or --scene");
  } else {
    const double ta = run.t_start + a.t0 * span;
    gt_grid = mode == GridMode::kInstantaneous ? synth::gt_flow_grid(*gt, ta)
                                               : synth::gt_displacement_grid(*gt, ta, ta + interval * span);
  }
  const FlowGrid pred = extract_flow_grid(run.params, a.t0, k, span, mode, interval, wc);
  if (pred.width() != gt_grid.width() || pred.height() != gt_grid.height()) {
    throw FormatError("ground-truth grid shape does not match the camera");
  }
  if (!a.save_grid.empty()) write_flow_grid(a.save_grid, pred);

  Mask mask = Mask::Ones(k.height, k.width);
  if (!a.events.empty()) {
    const auto evs = read_events(a.events, format_from_path(a.events));
    const double ta = run.t_start + a.t0 * span;
    const double tb = mode == GridMode::kInstantaneous ? run.t_end : ta + interval * span;
    mask = event_mask(evs, k, std::min(ta, tb), std::max(ta, tb));
  }
  const MetricsReport m = flow_metrics(pred, gt_grid, mask);
  nlohmann::json j{{"epe", m.epe}, {"ae", m.ae}, {"out_pct", m.out_pct}, {"n_valid", m.n_valid}};
  if (gt) {
    const int n = 101;
    std::vector<Twist> pred_tw;
    for (int i = 0; i < n; ++i) {
      pred_tw.push_back(spline::to_physical(spline::velocity(run.spline, i / double(n - 1)), run.spline.t_span));
    }
    const MotionErrors e = motion_rms(pred_tw, synth::sample_twists(*gt, run.t_start, run.t_end, n));
    j["rms_omega"] = e.rms_omega_deg;
    j["rms_nu"] = e.rms_nu;
    j["rms_nu_aligned"] = e.rms_nu_aligned;
    j["nu_scale"] = e.nu_scale;
    j["nu_angle"] = std::isnan(e.nu_angle_deg) ? nlohmann::json(nullptr) : nlohmann::json(e.nu_angle_deg);
  }
  std::cout << j.dump() << '\n';
  if (!a.out.empty()) std::ofstream(a.out) << j.dump() << '\n';
  return 0;
}

// ---- viz ----

struct VizArgs {
  fs::path run;
  int segment = 0;
  fs::path events;
  fs::path out = "viz_out";
  double t_ref = 0.5;
  bool events_only = false;
  fs::path legend;
  int legend_size = 256;
  int tracks = 50;
  double sigma = 1.0;
};

int cmd_viz(const VizArgs& a) {
  if (!a.legend.empty()) {
    viz::write_ppm(a.legend, viz::colour_wheel_legend(a.legend_size));
    if (a.run.empty()) return 0;
  }
  if (a.run.empty()) throw ConfigError("viz needs --run (or only --legend)");
  if (a.events.empty()) throw ConfigError("viz needs --events");
  const RunSegment run = load_run(a.run, a.segment);
  const auto evs = read_events(a.events, format_from_path(a.events));
  const CameraIntrinsics k = read_intrinsics(sidecar(a.events, ".intr"));
  const NormalizedSegment seg = segment_from_events(evs, k, run.t_start, run.t_end);
  fs::create_directories(a.out);

  const FlowGrid g = extract_flow_grid(run.params, a.t_ref, k, run.t_end - run.t_start, GridMode::kInstantaneous);
  const Mask mask = event_mask(evs, k, run.t_start, run.t_end);
  viz::write_ppm(a.out / "flow.ppm", viz::flow_to_rgb(g, 0.0, a.events_only ? &mask : nullptr));

  const EventBatch all = make_batch(seg, 0, seg.size());
  const auto traj = warp::integrate(run.params, all, a.t_ref, WarpConfig{});
  const Iwe warped = iwe::rasterize(traj.x_ref(), k, a.sigma);
  const Iwe identity = iwe::rasterize(seg.x, k, a.sigma);
  iwe::write_pgm(a.out / "iwe.pgm", warped.image);
  iwe::write_pgm(a.out / "iwe_identity.pgm", identity.image);

  std::vector<Eigen::Index> picks;
  const Eigen::Index n_tracks = std::min<Eigen::Index>(a.tracks, seg.size());
  for (Eigen::Index i = 0; i < n_tracks; ++i) picks.push_back(i * seg.size() / std::max<Eigen::Index>(1, n_tracks));
  std::ofstream tracks(a.out / "tracks.csv");
  viz::write_tracks(tracks, run.params, seg, picks, 11, WarpConfig{});

  std::cout << "IWE variance: warped " << iwe::variance(warped.image) << ", identity "
            << iwe::variance(identity.image) << '\n';
  return 0;
}

// ---- selftest ----

int cmd_selftest(const std::string& suite, std::uint64_t seed, bool flip) {
  geometry::testing::set_s_matrix_sign_flip(flip);
  std::vector<std::string> names = suite == "all" ? selftest::suite_names() : std::vector<std::string>{suite};
  bool ok = true;
  for (const auto& name : names) {
    const auto r = selftest::run_suite(name, seed);
    std::printf("%-10s %s  %8.1f ms  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.millis, r.detail.c_str());
    if (!r.passed) {
      ok = false;
      break;
    }
  }
  geometry::testing::set_s_matrix_sign_flip(false);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint event-camera optical flow and egomotion estimation"};
  app.require_subcommand(1, 1);

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic event stream with ground truth");
  synth_cmd->add_option("--preset", sa.preset, "Motion preset")
      ->check(CLI::IsMember({"rotation", "translation", "joint"}))
      ->capture_default_str();
  synth_cmd->add_option("--omega", sa.omega, "Angular velocity wx wy wz (rad/s), overrides the preset")
      ->expected(3);
  synth_cmd->add_option("--nu", sa.nu, "Linear velocity vx vy vz (m/s), overrides the preset")->expected(3);
  synth_cmd->add_option("--out", sa.out, "Event file (.csv for CSV, otherwise binary)")->capture_default_str();
  synth_cmd->add_option("--seed", sa.scene.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--points", sa.scene.n_points, "Tracked scene points")->capture_default_str();
  synth_cmd->add_option("--density", sa.scene.density, "Events per point per pixel of travel")
      ->capture_default_str();
  synth_cmd->add_option("--depth", sa.scene.depth, "Plane depth on the optical axis (m)")->capture_default_str();
  synth_cmd->add_option("--duration", sa.scene.duration, "Duration (s)")->capture_default_str();
  synth_cmd->add_option("--jitter", sa.scene.time_jitter, "Timestamp jitter std-dev (s)")->capture_default_str();
  std::vector<double> normal;
  synth_cmd->add_option("--normal", normal, "Plane normal nx ny nz")->expected(3);
  synth_cmd->add_option("--width", sa.scene.intrinsics.width, "Sensor width (px)")->capture_default_str();
  synth_cmd->add_option("--height", sa.scene.intrinsics.height, "Sensor height (px)")->capture_default_str();
  double focal = 100.0;
  synth_cmd->add_option("--focal", focal, "Focal length fx = fy (px)")->capture_default_str();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Fit flow network and motion spline per segment");
  train_cmd->add_option("events", ta.events, "Event file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--intrinsics", ta.intrinsics, "Intrinsics file (default: <events>.intr)");
  train_cmd->add_option("--preset", ta.preset, "Hyperparameter preset")
      ->check(CLI::IsMember({"mvsec", "dsec"}))
      ->capture_default_str();
  train_cmd->add_option("--config", ta.config, "key=value config applied over the preset")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", ta.out, "Output directory")->capture_default_str();
  train_cmd->add_option("--seed", ta.seed, "Random seed");
  train_cmd->add_option("--iters", ta.iters, "Iterations per segment");
  train_cmd->add_flag("--early-stop", ta.early_stop, "Enable early stopping (patience 45, min_delta 1e-3, warmup 300)");
  train_cmd->add_option("--w-geom", ta.w_geom, "Geometric loss weight");
  train_cmd->add_option("--w-flow", ta.w_flow, "Flow loss weight");
  train_cmd->add_option("--sigma", ta.sigma, "IWE splat std-dev (px)");
  train_cmd->add_option("--knot-init", ta.knot_init, "Initial value of every knot entry");
  train_cmd->add_option("--solver", ta.solver, "euler or rk4")->check(CLI::IsMember({"euler", "rk4"}));
  train_cmd->add_option("--backprop", ta.backprop, "direct or adjoint")->check(CLI::IsMember({"direct", "adjoint"}));
  train_cmd->add_option("--steps", ta.steps, "Solver steps per unit normalized time");
  train_cmd->add_option("--hidden", ta.hidden, "Hidden width of the flow network");
  train_cmd->add_option("--neigh", ta.neigh, "Events per flow-loss neighbourhood");
  train_cmd->add_option("--geom-sample", ta.geom_sample, "Events per geometric-loss sample");
  train_cmd->add_option("--segment-size", ta.segment_size, "Events per segment");
  train_cmd->add_flag("--quiet", ta.quiet, "No per-iteration progress");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Score a trained segment against ground truth");
  eval_cmd->add_option("--run", ea.run, "Training output directory")->required();
  eval_cmd->add_option("--segment", ea.segment, "Segment index")->capture_default_str();
  eval_cmd->add_option("--scene", ea.scene, "Synthetic scene sidecar (<events>.scene)");
  eval_cmd->add_option("--gt-grid", ea.gt_grid, "Ground-truth FLW1 grid instead of a scene");
  eval_cmd->add_option("--events", ea.events, "Event file, restricts scoring to event-active pixels");
  eval_cmd->add_option("--t0", ea.t0, "Start of the evaluation interval, normalized time")->capture_default_str();
  eval_cmd->add_option("--dt", ea.dt, "Displacement interval, normalized time (default: to the segment end)");
  eval_cmd->add_flag("--instantaneous", ea.instantaneous, "Score instantaneous flow in px/s at --t0");
  eval_cmd->add_option("--save-grid", ea.save_grid, "Write the predicted FLW1 grid");
  eval_cmd->add_option("--out", ea.out, "Write the metrics JSON line here too");
  eval_cmd->add_option("--solver", ea.solver, "Solver for displacement grids")
      ->check(CLI::IsMember({"euler", "rk4"}))
      ->capture_default_str();
  eval_cmd->add_option("--steps", ea.steps, "Solver steps per unit normalized time")->capture_default_str();

  VizArgs va;
  auto* viz_cmd = app.add_subcommand("viz", "Flow colour image, IWE images and point tracks");
  viz_cmd->add_option("--run", va.run, "Training output directory");
  viz_cmd->add_option("--segment", va.segment, "Segment index")->capture_default_str();
  viz_cmd->add_option("--events", va.events, "Event file");
  viz_cmd->add_option("--out", va.out, "Output directory")->capture_default_str();
  viz_cmd->add_option("--t-ref", va.t_ref, "Normalized reference time")->capture_default_str();
  viz_cmd->add_flag("--events-only", va.events_only, "Colour only pixels that saw events");
  viz_cmd->add_option("--legend", va.legend, "Write the colour-wheel legend PPM here");
  viz_cmd->add_option("--legend-size", va.legend_size, "Legend side length (px)")->capture_default_str();
  viz_cmd->add_option("--tracks", va.tracks, "Number of point tracks")->capture_default_str();
  viz_cmd->add_option("--sigma", va.sigma, "IWE splat std-dev (px)")->capture_default_str();

  std::string suite = "all";
  std::uint64_t st_seed = 7;
  bool flip = false;
  auto* st_cmd = app.add_subcommand("selftest", "Run the invariant suites");
  std::vector<std::string> choices{"all"};
  for (const auto& s : selftest::suite_names()) choices.push_back(s);
  st_cmd->add_option("--suite", suite, "Suite to run")->check(CLI::IsMember(choices))->capture_default_str();
  st_cmd->add_option("--seed", st_seed, "Random seed")->capture_default_str();
  st_cmd->add_flag("--inject-s-flip", flip, "Test hook: flip the sign of the s-matrix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*synth_cmd) {
      if (!normal.empty()) sa.scene.normal = {normal[0], normal[1], normal[2]};
      auto& k = sa.scene.intrinsics;
      k.fx = k.fy = focal;
      k.cx = (k.width - 1) / 2.0;
      k.cy = (k.height - 1) / 2.0;
      return cmd_synth(sa);
    }
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(ea);
    if (*viz_cmd) return cmd_viz(va);
    if (*st_cmd) return cmd_selftest(suite, st_seed, flip);
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
