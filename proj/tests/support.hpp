#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "emoflow/events.hpp"
#include "emoflow/net.hpp"
#include "emoflow/rng.hpp"

namespace testutil {

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

inline emoflow::FlowNetParams random_params(std::uint64_t seed, int hidden, double scale = 1.0) {
  emoflow::FlowNetParams p(hidden);
  emoflow::CounterRng rng(seed, 99);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.flat()(i) = scale * rng.uniform(-1.0, 1.0) / std::sqrt(hidden);
  return p;
}

/// Random events in a width x height frame, sorted in time over [0, 1].
inline emoflow::NormalizedSegment random_segment(Eigen::Index n, int width, int height, std::uint64_t seed) {
  emoflow::CounterRng rng(seed, 7);
  emoflow::NormalizedSegment seg;
  seg.intrinsics = {width * 1.5, width * 1.5, (width - 1) / 2.0, (height - 1) / 2.0, width, height};
  seg.x.resize(2, n);
  seg.t.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    seg.t(i) = static_cast<double>(i) / std::max<Eigen::Index>(1, n - 1);
    const Eigen::Vector2d px(rng.uniform(4.0, width - 5.0), rng.uniform(4.0, height - 5.0));
    seg.x.col(i) = emoflow::normalize_pixel(px, seg.intrinsics);
  }
  seg.t_span = 0.1;
  return seg;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("emoflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
