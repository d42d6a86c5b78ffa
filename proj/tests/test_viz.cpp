#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "emoflow/error.hpp"
#include "emoflow/viz.hpp"
#include "support.hpp"

using namespace emoflow;
using Rgb = std::array<std::uint8_t, 3>;

namespace {

std::string ppm_bytes(const viz::RgbImage& img) {
  std::ostringstream os;
  viz::write_ppm(os, img);
  return os.str();
}

}  // namespace

TEST_SUITE("viz") {

TEST_CASE("colour wheel has the 55 standard hues") {
  const auto& w = viz::colour_wheel();
  REQUIRE(w.size() == 55);
  CHECK(w[0] == Rgb{255, 0, 0});
  CHECK(w[15] == Rgb{255, 255, 0});  // after 15 red-yellow steps
  CHECK(w[21] == Rgb{0, 255, 0});
  CHECK(w[25] == Rgb{0, 255, 255});
  CHECK(w[36] == Rgb{0, 0, 255});
  CHECK(w[49] == Rgb{255, 0, 255});
}

TEST_CASE("zero flow renders white, unit flow at full saturation") {
  CHECK(viz::flow_colour(0.0, 0.0) == Rgb{255, 255, 255});
  CHECK(viz::flow_colour(1.0, 0.0) == Rgb{255, 0, 0});
  CHECK(viz::flow_colour(std::nan(""), 0.0) == Rgb{0, 0, 0});
  const FlowGrid zero = FlowGrid::zeros(6, 4, FlowUnit::kPixelsPerSecond);
  const auto img = viz::flow_to_rgb(zero);
  for (auto b : img.data) CHECK(b == 255);
}

TEST_CASE("uniform flow renders a single colour") {
  FlowGrid g = FlowGrid::zeros(7, 5, FlowUnit::kPixelsPerSecond);
  g.u.setConstant(1.0);
  const auto img = viz::flow_to_rgb(g);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 7; ++i) CHECK(img.at(i, j) == img.at(0, 0));
  CHECK(img.at(0, 0) != Rgb{255, 255, 255});
}

TEST_CASE("masked and invalid pixels render black") {
  FlowGrid g = FlowGrid::zeros(3, 2, FlowUnit::kPixelsPerSecond);
  g.u.setConstant(0.5);
  g.valid(1, 2) = 0;
  Mask m = Mask::Ones(2, 3);
  m(0, 0) = 0;
  const auto img = viz::flow_to_rgb(g, 0.0, &m);
  CHECK(img.at(0, 0) == Rgb{0, 0, 0});
  CHECK(img.at(2, 1) == Rgb{0, 0, 0});
  CHECK(img.at(1, 0) == viz::flow_colour(1.0, 0.0));  // auto scale normalizes to the shown maximum
  const auto fixed = viz::flow_to_rgb(g, 2.0, &m);
  CHECK(fixed.at(1, 0) == viz::flow_colour(0.25, 0.0));
}

TEST_CASE("ppm layout") {
  viz::RgbImage img{2, 1, {1, 2, 3, 4, 5, 6}};
  CHECK(ppm_bytes(img) == std::string("P6\n2 1\n255\n\x01\x02\x03\x04\x05\x06", 17));
}

TEST_CASE("legend matches the golden file") {
  std::ifstream is(std::string(EMOFLOW_TEST_DATA) + "/colour_wheel_64.ppm", std::ios::binary);
  REQUIRE(is.good());
  const std::string golden((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto legend = viz::colour_wheel_legend(64);
  CHECK(ppm_bytes(legend) == golden);
  // Centre is (nearly) zero flow; the rim is fully saturated.
  CHECK(viz::colour_wheel_legend(65).at(32, 32) == Rgb{255, 255, 255});
  CHECK_THROWS_AS(viz::colour_wheel_legend(1), ConfigError);
}

TEST_CASE("tracks of a still network stay put") {
  const auto seg = testutil::random_segment(20, 32, 32, 5);
  FlowNetParams p(8);
  p.set_zero();
  std::ostringstream os;
  viz::write_tracks(os, p, seg, {2, 7}, 3, {});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "src_index,t,x,y");
  int rows = 0;
  while (std::getline(is, line)) {
    std::istringstream row(line);
    std::string idx, t, x, y;
    std::getline(row, idx, ',');
    std::getline(row, t, ',');
    std::getline(row, x, ',');
    std::getline(row, y, ',');
    const Eigen::Index e = std::stol(idx);
    const Eigen::Vector2d px = unnormalize(seg.x.col(e), seg.intrinsics);
    CHECK(std::stod(x) == doctest::Approx(px.x()).epsilon(1e-12));
    CHECK(std::stod(y) == doctest::Approx(px.y()).epsilon(1e-12));
    ++rows;
  }
  CHECK(rows == 6);
  CHECK_THROWS_AS(viz::write_tracks(os, p, seg, {1}, 1, {}), ConfigError);
}

}  // TEST_SUITE
