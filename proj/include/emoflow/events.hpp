#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace emoflow {

/// A single event. Pixel coordinates are stored as 4-byte floats to match the
/// on-disk record layout, so binary and CSV round trips are lossless.
struct Event {
  double t = 0.0;
  float x = 0.0f;
  float y = 0.0f;
  std::int8_t p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws ConfigError if focal lengths or principal point are out of range.
  void validate() const;
  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

struct EventSegment {
  std::vector<Event> events;
  double t_start = 0.0;
  double t_end = 0.0;
  CameraIntrinsics intrinsics;

  double duration() const { return t_end - t_start; }
};

enum class EventFormat { kCsv, kBinary };

/// `.csv` selects CSV, anything else the binary format.
EventFormat format_from_path(const std::filesystem::path& path);

std::vector<Event> read_events(const std::filesystem::path& path, EventFormat format);
std::vector<Event> read_events_csv(std::istream& is);
std::vector<Event> read_events_binary(std::istream& is);

/// Sensor size is only recorded by the binary format.
void write_events(const std::filesystem::path& path, const std::vector<Event>& events,
                  EventFormat format, std::uint32_t width = 0, std::uint32_t height = 0);
void write_events_csv(std::ostream& os, const std::vector<Event>& events);
void write_events_binary(std::ostream& os, const std::vector<Event>& events, std::uint32_t width,
                         std::uint32_t height);

/// key=value text: fx, fy, cx, cy, width, height. `#` starts a comment.
CameraIntrinsics read_intrinsics(const std::filesystem::path& path);
CameraIntrinsics parse_intrinsics(std::istream& is);
void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& intrinsics);

/// Consecutive segments of exactly `n_per_segment` events; the trailing partial
/// segment is dropped. Throws OrderingError on unsorted input.
std::vector<EventSegment> segment_stream(const std::vector<Event>& events, std::size_t n_per_segment,
                                         const CameraIntrinsics& intrinsics);

struct NormalizedEvent {
  Eigen::Vector2d x;
  double t = 0.0;
};

NormalizedEvent normalize(const Event& ev, const EventSegment& seg);
Eigen::Vector2d normalize_pixel(const Eigen::Vector2d& pixel, const CameraIntrinsics& intrinsics);
Eigen::Vector2d unnormalize(const Eigen::Vector2d& x_n, const CameraIntrinsics& intrinsics);

/// Column-major batch view of a segment in normalized coordinates, the form the
/// warp and loss kernels consume.
struct NormalizedSegment {
  Eigen::Matrix2Xd x;  // 2 x N
  Eigen::VectorXd t;   // N, in [0, 1]
  CameraIntrinsics intrinsics;
  double t_start = 0.0;
  double t_span = 1.0;  // seconds

  Eigen::Index size() const { return t.size(); }
};

NormalizedSegment normalize_segment(const EventSegment& seg);

}  // namespace emoflow
