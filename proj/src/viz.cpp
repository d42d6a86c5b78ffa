#include "emoflow/viz.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>

#include "emoflow/error.hpp"

namespace emoflow::viz {

std::array<std::uint8_t, 3> RgbImage::at(int x, int y) const {
  const auto i = 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x));
  return {data[i], data[i + 1], data[i + 2]};
}

const std::vector<std::array<std::uint8_t, 3>>& colour_wheel() {
  static const std::vector<std::array<std::uint8_t, 3>> wheel = [] {
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<std::array<std::uint8_t, 3>> w;
    auto ramp = [](int i, int n) { return static_cast<std::uint8_t>(std::floor(255.0 * i / n)); };
    auto down = [](int i, int n) { return static_cast<std::uint8_t>(255 - std::floor(255.0 * i / n)); };
    for (int i = 0; i < RY; ++i) w.push_back({255, ramp(i, RY), 0});
    for (int i = 0; i < YG; ++i) w.push_back({down(i, YG), 255, 0});
    for (int i = 0; i < GC; ++i) w.push_back({0, 255, ramp(i, GC)});
    for (int i = 0; i < CB; ++i) w.push_back({0, down(i, CB), 255});
    for (int i = 0; i < BM; ++i) w.push_back({ramp(i, BM), 0, 255});
    for (int i = 0; i < MR; ++i) w.push_back({255, 0, down(i, MR)});
    return w;
  }();
  return wheel;
}

std::array<std::uint8_t, 3> flow_colour(double u, double v) {
  if (!std::isfinite(u) || !std::isfinite(v)) return {0, 0, 0};
  const auto& wheel = colour_wheel();
  const int ncols = static_cast<int>(wheel.size());
  const double rad = std::hypot(u, v);
  const double a = std::atan2(-v, -u) / std::numbers::pi;
  const double fk = (a + 1.0) / 2.0 * (ncols - 1);
  const int k0 = static_cast<int>(std::floor(fk));
  const int k1 = (k0 + 1) % ncols;
  const double f = fk - k0;
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double c0 = wheel[static_cast<std::size_t>(k0)][static_cast<std::size_t>(c)] / 255.0;
    const double c1 = wheel[static_cast<std::size_t>(k1)][static_cast<std::size_t>(c)] / 255.0;
    double col = (1.0 - f) * c0 + f * c1;
    col = rad <= 1.0 ? 1.0 - rad * (1.0 - col) : col * 0.75;
    out[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::floor(255.0 * col));
  }
  return out;
}

RgbImage flow_to_rgb(const FlowGrid& g, double max_magnitude, const Mask* mask) {
  auto shown = [&](int j, int i) { return g.valid(j, i) && (!mask || (*mask)(j, i)); };
  if (max_magnitude <= 0.0) {
    for (int j = 0; j < g.height(); ++j)
      for (int i = 0; i < g.width(); ++i)
        if (shown(j, i)) max_magnitude = std::max(max_magnitude, std::hypot(g.u(j, i), g.v(j, i)));
  }
  const double scale = max_magnitude > 0.0 ? 1.0 / max_magnitude : 0.0;
  RgbImage img{g.width(), g.height(), std::vector<std::uint8_t>(3 * static_cast<std::size_t>(g.u.size()), 0)};
  for (int j = 0; j < g.height(); ++j) {
    for (int i = 0; i < g.width(); ++i) {
      if (!shown(j, i)) continue;
      const auto c = flow_colour(g.u(j, i) * scale, g.v(j, i) * scale);
      std::copy(c.begin(), c.end(), img.data.begin() + 3 * (static_cast<std::ptrdiff_t>(j) * g.width() + i));
    }
  }
  return img;
}

RgbImage colour_wheel_legend(int size) {
  if (size < 2) throw ConfigError("legend size must be at least 2");
  RgbImage img{size, size, std::vector<std::uint8_t>(3 * static_cast<std::size_t>(size) * size)};
  const double c = (size - 1) / 2.0;
  for (int j = 0; j < size; ++j) {
    for (int i = 0; i < size; ++i) {
      const auto col = flow_colour((i - c) / c, (j - c) / c);
      std::copy(col.begin(), col.end(), img.data.begin() + 3 * (static_cast<std::ptrdiff_t>(j) * size + i));
    }
  }
  return img;
}

void write_ppm(std::ostream& os, const RgbImage& img) {
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  write_ppm(os, img);
}

void write_tracks(std::ostream& os, const FlowNetParams& params, const NormalizedSegment& seg,
                  const std::vector<Eigen::Index>& indices, int n_samples, const WarpConfig& cfg) {
  if (n_samples < 2) throw ConfigError("tracks need at least two samples");
  const EventBatch batch = make_batch(seg, indices);
  const CameraIntrinsics& k = seg.intrinsics;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "src_index,t,x,y\n";
  std::vector<Eigen::Matrix2Xd> at(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    const double tau = static_cast<double>(s) / (n_samples - 1);
    at[static_cast<std::size_t>(s)] = warp::integrate(params, batch, tau, cfg).x_ref();
  }
  for (Eigen::Index e = 0; e < batch.size(); ++e) {
    for (int s = 0; s < n_samples; ++s) {
      const double tau = static_cast<double>(s) / (n_samples - 1);
      const Eigen::Vector2d px = unnormalize(at[static_cast<std::size_t>(s)].col(e), k);
      os << batch.index[static_cast<std::size_t>(e)] << ',' << seg.t_start + tau * seg.t_span << ',' << px.x()
         << ',' << px.y() << '\n';
    }
  }
}

}  // namespace emoflow::viz
