#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "emoflow/events.hpp"
#include "emoflow/metrics.hpp"
#include "emoflow/net.hpp"
#include "emoflow/warp.hpp"

namespace emoflow::viz {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major RGB

  std::array<std::uint8_t, 3> at(int x, int y) const;
};

/// The 55-entry Middlebury colour wheel.
const std::vector<std::array<std::uint8_t, 3>>& colour_wheel();

/// Colour of a flow vector already divided by the display maximum: hue from
/// direction, saturation from magnitude, white at zero.
std::array<std::uint8_t, 3> flow_colour(double u, double v);

/// Max-normalized rendering. max_magnitude <= 0 picks the largest shown
/// magnitude. Pixels outside `mask` (when given) or invalid are black.
RgbImage flow_to_rgb(const FlowGrid& g, double max_magnitude = 0.0, const Mask* mask = nullptr);

/// Square legend: the flow at each pixel is its offset from the centre,
/// scaled so the inscribed circle has unit magnitude.
RgbImage colour_wheel_legend(int size);

void write_ppm(std::ostream& os, const RgbImage& img);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);

/// CSV "src_index,t,x,y": each listed event warped to `n_samples` evenly
/// spaced normalized times, reported in seconds and pixels.
void write_tracks(std::ostream& os, const FlowNetParams& params, const NormalizedSegment& seg,
                  const std::vector<Eigen::Index>& indices, int n_samples, const WarpConfig& cfg);

}  // namespace emoflow::viz
