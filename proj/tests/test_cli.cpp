#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <json.hpp>

#include "emoflow/events.hpp"
#include "emoflow/synth.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace emoflow;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr together
};

Run run(const std::string& args) {
  const std::string cmd = std::string(EMOFLOW_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

nlohmann::json last_json_line(const std::string& out) {
  const auto start = out.rfind("\n{");
  return nlohmann::json::parse(out.substr(start == std::string::npos ? out.find('{') : start + 1));
}

// Small, fast training flags for plumbing checks.
const std::string kTiny = " --iters 3 --hidden 16 --neigh 200 --geom-sample 32 --quiet";

}  // namespace

TEST_CASE("help documents every subcommand") {
  const auto top = run("--help");
  CHECK(top.code == 0);
  for (const char* sub : {"synth", "train", "eval", "viz", "selftest"}) {
    CHECK(top.out.find(sub) != std::string::npos);
    const auto h = run(std::string(sub) + " --help");
    CHECK(h.code == 0);
    CHECK(h.out.find("--") != std::string::npos);
  }
  CHECK(run("train --help").out.find("--early-stop") != std::string::npos);
  CHECK(run("eval --help").out.find("--dt") != std::string::npos);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("synth --points").code == 2);
  CHECK(run("synth --preset spin").code == 2);
  CHECK(run("selftest --suite nothing").code == 2);
  CHECK(run("train /nonexistent.evt").code == 2);
}

TEST_CASE("synth writes events and ground truth deterministically") {
  const auto dir = testutil::scratch_dir("cli_synth");
  const auto a = dir / "a.evt", b = dir / "b.evt";
  const auto r = run("synth --preset rotation --out " + a.string());
  REQUIRE(r.code == 0);
  REQUIRE(run("synth --preset rotation --out " + b.string()).code == 0);
  const auto events = read_events(a, EventFormat::kBinary);
  CHECK(events.size() > 0);
  CHECK(r.out.find(std::to_string(events.size())) != std::string::npos);
  CHECK(slurp(a) == slurp(b));
  for (const char* ext : {".intr", ".scene", ".gt.flw", ".gt_traj.csv"}) {
    CHECK(fs::exists(a.string() + ext));
    CHECK(slurp(a.string() + ext) == slurp(b.string() + ext));
  }
  const auto c = dir / "c.evt";
  REQUIRE(run("synth --preset rotation --seed 9 --out " + c.string()).code == 0);
  CHECK(slurp(a) != slurp(c));
}

TEST_CASE("synth translation ground truth satisfies the geometric residual") {
  const auto dir = testutil::scratch_dir("cli_trans");
  const auto ev = dir / "t.csv";
  REQUIRE(run("synth --preset translation --points 40 --out " + ev.string()).code == 0);
  const auto events = read_events(ev, EventFormat::kCsv);
  const GroundTruth gt = synth::read_scene(ev.string() + ".scene");
  const auto& k = gt.scene.intrinsics;
  REQUIRE(!events.empty());
  double worst = 0.0;
  for (const auto& e : events) {
    const Eigen::Vector2d f = *synth::gt_flow_at(gt, e.t, {e.x, e.y});
    const Eigen::Vector2d x = normalize_pixel({e.x, e.y}, k);
    const auto res = geometry::geometric_residual({f.x() / k.fx, f.y() / k.fy}, {x.x(), x.y()},
                                                  synth::twist_at(gt, e.t));
    worst = std::max(worst, std::abs(res.r));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("train, eval and viz round trip") {
  const auto dir = testutil::scratch_dir("cli_train");
  const auto ev = dir / "j.evt";
  REQUIRE(run("synth --preset joint --points 60 --out " + ev.string()).code == 0);
  const auto r1 = dir / "r1", r2 = dir / "r2";
  const auto t1 = run("train " + ev.string() + kTiny + " --out " + r1.string());
  REQUIRE(t1.code == 0);
  REQUIRE(run("train " + ev.string() + kTiny + " --out " + r2.string()).code == 0);
  for (const char* f : {"config.txt", "seg0.emf", "seg0.knots", "seg0_report.csv", "segments.csv", "trajectory.csv"}) {
    CHECK(fs::exists(r1 / f));
  }
  CHECK(slurp(r1 / "seg0_report.csv") == slurp(r2 / "seg0_report.csv"));
  CHECK(slurp(r1 / "seg0.emf") == slurp(r2 / "seg0.emf"));
  CHECK(slurp(r1 / "seg0.knots") == slurp(r2 / "seg0.knots"));
  CHECK(slurp(r1 / "trajectory.csv").rfind("t,wx,wy,wz,vx,vy,vz\n", 0) == 0);

  SUBCASE("eval on the synthetic scene reports all metrics") {
    const auto e = run("eval --run " + r1.string() + " --scene " + ev.string() + ".scene --events " + ev.string());
    REQUIRE(e.code == 0);
    const auto j = last_json_line(e.out);
    for (const char* key : {"epe", "ae", "out_pct", "n_valid", "rms_omega", "rms_nu", "rms_nu_aligned", "nu_scale"})
      CHECK(j.contains(key));
    CHECK(j["n_valid"].get<int>() > 0);
  }
  SUBCASE("eval against its own grid is exact") {
    const auto g = dir / "pred.flw";
    const auto base = "eval --run " + r1.string() + " --events " + ev.string();
    REQUIRE(run(base + " --scene " + ev.string() + ".scene --save-grid " + g.string()).code == 0);
    const auto e = run(base + " --gt-grid " + g.string());
    REQUIRE(e.code == 0);
    // The grid file stores float32, so "exact" means within float rounding of the pixel values.
    CHECK(last_json_line(e.out)["epe"].get<double>() < 1e-5);
  }
  SUBCASE("dt selects the displacement interval") {
    const auto base = "eval --run " + r1.string() + " --scene " + ev.string() + ".scene";
    const auto full = last_json_line(run(base).out), half = last_json_line(run(base + " --dt 0.5").out);
    CHECK(full["epe"] != half["epe"]);
    CHECK(run(base + " --t0 0.8 --dt 0.5").code == 2);
  }
  SUBCASE("viz writes images and tracks") {
    const auto out = dir / "viz";
    const auto v = run("viz --run " + r1.string() + " --events " + ev.string() + " --out " + out.string() +
                       " --events-only --tracks 5");
    REQUIRE(v.code == 0);
    CHECK(slurp(out / "flow.ppm").rfind("P6\n64 64\n255\n", 0) == 0);
    CHECK(slurp(out / "iwe.pgm").rfind("P5\n64 64\n65535\n", 0) == 0);
    CHECK(fs::exists(out / "iwe_identity.pgm"));
    CHECK(v.out.find("IWE variance") != std::string::npos);
  }
  SUBCASE("eval rejects a mismatched grid") {
    const auto g = dir / "small.flw";
    write_flow_grid(g, FlowGrid::zeros(8, 8, FlowUnit::kPixelsPerInterval));
    CHECK(run("eval --run " + r1.string() + " --events " + ev.string() + " --gt-grid " + g.string()).code == 2);
  }
}

TEST_CASE("train honours early stopping and reports divergence") {
  const auto dir = testutil::scratch_dir("cli_stop");
  const auto ev = dir / "j.evt";
  REQUIRE(run("synth --preset joint --points 40 --out " + ev.string()).code == 0);

  std::ofstream(dir / "stop.cfg") << "early_stop=true\npatience=1\nmin_delta=1e9\nwarmup=0\n";
  const auto s = run("train " + ev.string() + " --iters 20 --hidden 16 --neigh 100 --geom-sample 16 --quiet --config " +
                     (dir / "stop.cfg").string() + " --out " + (dir / "s").string());
  CHECK(s.code == 0);
  CHECK(slurp(dir / "s" / "segments.csv").find(",early_stop,2,") != std::string::npos);

  std::ofstream(dir / "boom.cfg") << "flow_lr_kind=constant\nflow_lr_start=1e300\nflow_lr_end=1e300\n";
  const auto d = run("train " + ev.string() + kTiny + " --config " + (dir / "boom.cfg").string() + " --out " +
                     (dir / "d").string());
  CHECK(d.code == 3);
  CHECK(d.out.find("diverged") != std::string::npos);
}

TEST_CASE("legend output matches the golden file") {
  const auto dir = testutil::scratch_dir("cli_legend");
  REQUIRE(run("viz --legend " + (dir / "l.ppm").string() + " --legend-size 64").code == 0);
  CHECK(slurp(dir / "l.ppm") == slurp(fs::path(EMOFLOW_TEST_DATA) / "colour_wheel_64.ppm"));
}

TEST_CASE("selftest") {
  const auto all = run("selftest");
  CHECK(all.code == 0);
  for (const char* s : {"geometry", "gradients", "adjoint", "spline"}) CHECK(all.out.find(s) != std::string::npos);
  const auto geo = run("selftest --suite geometry");
  CHECK(geo.code == 0);
  CHECK(geo.out.find("spline") == std::string::npos);
  const auto flip = run("selftest --suite geometry --inject-s-flip");
  CHECK(flip.code == 1);
  CHECK(flip.out.find("FAIL") != std::string::npos);
  CHECK(flip.out.find("omega") != std::string::npos);
}
