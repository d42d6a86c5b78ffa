#include "emoflow/events.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string_view>

#include "emoflow/binary_io.hpp"
#include "emoflow/error.hpp"

namespace emoflow {

namespace {

constexpr std::string_view kEventMagic = "EVT1";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line) {
  field = trim(field);
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("invalid number '" + std::string(field) + "'", line);
  }
  return value;
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("sensor size must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw ConfigError("principal point must lie inside the sensor");
  }
}

EventFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? EventFormat::kCsv : EventFormat::kBinary;
}

std::vector<Event> read_events_csv(std::istream& is) {
  std::vector<Event> events;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line_no == 1 && line.front() == 't') continue;  // header "t,x,y,p"

    std::string_view fields[4];
    std::size_t n = 0;
    while (n < 4) {
      auto comma = line.find(',');
      fields[n++] = line.substr(0, comma);
      if (comma == std::string_view::npos) {
        line = {};
        break;
      }
      line.remove_prefix(comma + 1);
    }
    if (n != 4 || !line.empty()) throw ParseError("expected 4 fields t,x,y,p", line_no);

    Event ev;
    ev.t = parse_number<double>(fields[0], line_no);
    ev.x = parse_number<float>(fields[1], line_no);
    ev.y = parse_number<float>(fields[2], line_no);
    const int p = parse_number<int>(fields[3], line_no);
    if (p != 1 && p != -1 && p != 0) throw ParseError("polarity must be +1 or -1", line_no);
    // 0/1 encodings are common in exported datasets.
    ev.p = static_cast<std::int8_t>(p == 0 ? -1 : p);
    if (!std::isfinite(ev.t)) throw ParseError("non-finite timestamp", line_no);
    events.push_back(ev);
  }
  return events;
}

std::vector<Event> read_events_binary(std::istream& is) {
  std::size_t offset = 0;
  bin::expect_magic(is, kEventMagic, offset);
  bin::get<std::uint32_t>(is, offset);  // width
  bin::get<std::uint32_t>(is, offset);  // height
  const auto count = bin::get<std::uint64_t>(is, offset);

  std::vector<Event> events;
  events.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 26)));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t record_offset = offset;
    Event ev;
    ev.t = bin::get<double>(is, offset);
    ev.x = bin::get<float>(is, offset);
    ev.y = bin::get<float>(is, offset);
    ev.p = bin::get<std::int8_t>(is, offset);
    if (ev.p != 1 && ev.p != -1) throw ParseError("polarity must be +1 or -1", record_offset);
    if (!std::isfinite(ev.t)) throw ParseError("non-finite timestamp", record_offset);
    events.push_back(ev);
  }
  return events;
}

std::vector<Event> read_events(const std::filesystem::path& path, EventFormat format) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open event file: " + path.string());
  return format == EventFormat::kCsv ? read_events_csv(is) : read_events_binary(is);
}

void write_events_csv(std::ostream& os, const std::vector<Event>& events) {
  os << "t,x,y,p\n";
  char buf[128];
  for (const auto& ev : events) {
    // Shortest round-trip representation keeps the text format lossless.
    char* p = buf;
    char* end = buf + sizeof(buf);
    p = std::to_chars(p, end, ev.t).ptr;
    *p++ = ',';
    p = std::to_chars(p, end, ev.x).ptr;
    *p++ = ',';
    p = std::to_chars(p, end, ev.y).ptr;
    *p++ = ',';
    p = std::to_chars(p, end, static_cast<int>(ev.p)).ptr;
    *p++ = '\n';
    os.write(buf, p - buf);
  }
}

void write_events_binary(std::ostream& os, const std::vector<Event>& events, std::uint32_t width,
                         std::uint32_t height) {
  bin::put_magic(os, kEventMagic);
  bin::put<std::uint32_t>(os, width);
  bin::put<std::uint32_t>(os, height);
  bin::put<std::uint64_t>(os, events.size());
  for (const auto& ev : events) {
    bin::put<double>(os, ev.t);
    bin::put<float>(os, ev.x);
    bin::put<float>(os, ev.y);
    bin::put<std::int8_t>(os, ev.p);
  }
}

void write_events(const std::filesystem::path& path, const std::vector<Event>& events,
                  EventFormat format, std::uint32_t width, std::uint32_t height) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write event file: " + path.string());
  if (format == EventFormat::kCsv) {
    write_events_csv(os, events);
  } else {
    write_events_binary(os, events, width, height);
  }
  if (!os) throw Error("write failed: " + path.string());
}

CameraIntrinsics parse_intrinsics(std::istream& is) {
  std::map<std::string, std::string, std::less<>> kv;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", line_no);
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  auto need = [&](const char* key) -> std::string_view {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(std::string("intrinsics missing key: ") + key);
    return it->second;
  };
  CameraIntrinsics k;
  k.fx = parse_number<double>(need("fx"), 0);
  k.fy = parse_number<double>(need("fy"), 0);
  k.cx = parse_number<double>(need("cx"), 0);
  k.cy = parse_number<double>(need("cy"), 0);
  k.width = parse_number<int>(need("width"), 0);
  k.height = parse_number<int>(need("height"), 0);
  k.validate();
  return k;
}

CameraIntrinsics read_intrinsics(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open intrinsics file: " + path.string());
  return parse_intrinsics(is);
}

void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write intrinsics file: " + path.string());
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "fx=" << k.fx << "\nfy=" << k.fy << "\ncx=" << k.cx << "\ncy=" << k.cy
     << "\nwidth=" << k.width << "\nheight=" << k.height << "\n";
}

std::vector<EventSegment> segment_stream(const std::vector<Event>& events, std::size_t n_per_segment,
                                         const CameraIntrinsics& intrinsics) {
  if (n_per_segment < 2) throw ConfigError("segments need at least 2 events");
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].t < events[i - 1].t) {
      throw OrderingError("events not sorted by time at index " + std::to_string(i));
    }
  }
  std::vector<EventSegment> segments;
  for (std::size_t begin = 0; begin + n_per_segment <= events.size(); begin += n_per_segment) {
    EventSegment seg;
    seg.events.assign(events.begin() + static_cast<std::ptrdiff_t>(begin),
                      events.begin() + static_cast<std::ptrdiff_t>(begin + n_per_segment));
    seg.t_start = seg.events.front().t;
    seg.t_end = seg.events.back().t;
    seg.intrinsics = intrinsics;
    segments.push_back(std::move(seg));
  }
  return segments;
}

Eigen::Vector2d normalize_pixel(const Eigen::Vector2d& pixel, const CameraIntrinsics& k) {
  return {(pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy};
}

Eigen::Vector2d unnormalize(const Eigen::Vector2d& x_n, const CameraIntrinsics& k) {
  return {x_n.x() * k.fx + k.cx, x_n.y() * k.fy + k.cy};
}

NormalizedEvent normalize(const Event& ev, const EventSegment& seg) {
  const double span = seg.duration();
  if (!(span > 0.0)) throw DegenerateError("segment has zero duration");
  return {normalize_pixel({ev.x, ev.y}, seg.intrinsics), (ev.t - seg.t_start) / span};
}

NormalizedSegment normalize_segment(const EventSegment& seg) {
  seg.intrinsics.validate();
  const double span = seg.duration();
  if (!(span > 0.0)) throw DegenerateError("segment has zero duration");
  NormalizedSegment out;
  const auto n = static_cast<Eigen::Index>(seg.events.size());
  out.x.resize(2, n);
  out.t.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ne = normalize(seg.events[static_cast<std::size_t>(i)], seg);
    out.x.col(i) = ne.x;
    out.t(i) = ne.t;
  }
  out.intrinsics = seg.intrinsics;
  out.t_start = seg.t_start;
  out.t_span = span;
  return out;
}

}  // namespace emoflow
