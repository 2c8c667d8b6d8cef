#include "objsearch/localize.hpp"

#include "objsearch/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <vector>

namespace objsearch {

ClockHour::ClockHour(int hour) : hour_(hour) {
  const bool ok = hour == 9 || hour == 10 || hour == 11 || hour == 12 || hour == 1 || hour == 2 ||
                  hour == 3;
  if (!ok) throw InvariantError("clock hour " + std::to_string(hour) + " outside 9..3");
}

namespace {

void require_bbox(const BBox &bbox, int width, int height) {
  if (!bbox.valid_for(width, height)) throw PreconditionError("bbox does not fit the frame");
}

} // namespace

Mask mask_from_bbox(const BBox &bbox, const DepthFrame &depth, double tau) {
  require_bbox(bbox, depth.width, depth.height);
  if (!(tau > 0)) throw PreconditionError("mask_from_bbox: tau must be positive");
  const PixelSpan span = pixel_span(bbox, depth.width, depth.height);

  std::vector<float> values;
  values.reserve(span.count());
  for (int y = span.y0; y < span.y1; ++y) {
    for (int x = span.x0; x < span.x1; ++x) values.push_back(depth.at(x, y));
  }
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double median = *mid;

  Mask mask(depth.width, depth.height);
  std::size_t set = 0;
  for (int y = span.y0; y < span.y1; ++y) {
    for (int x = span.x0; x < span.x1; ++x) {
      if (std::abs(depth.at(x, y) - median) <= tau) {
        mask.set(x, y);
        ++set;
      }
    }
  }
  if (set == 0) {
    for (int y = span.y0; y < span.y1; ++y) {
      for (int x = span.x0; x < span.x1; ++x) mask.set(x, y);
    }
  }
  return mask;
}

double masked_mean_depth(const DepthFrame &depth, const Mask &mask) {
  if (mask.width != depth.width || mask.height != depth.height) {
    throw PreconditionError("masked_mean_depth: mask and depth dimensions differ");
  }
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) {
      sum += depth.depth[i];
      ++n;
    }
  }
  if (n == 0) throw PreconditionError("masked_mean_depth: empty mask");
  return sum / static_cast<double>(n);
}

namespace {

struct ClockGeometry {
  double dx;        // right of the bottom-edge center
  double angle_abs; // elevation from the nearer bottom-edge half, (0, 90]
};

ClockGeometry clock_geometry(double center_x, double center_y, int width, int height) {
  const double dy = height - center_y;
  if (!(dy > 0)) throw PreconditionError("bbox center must lie above the bottom edge");
  const double dx = center_x - 0.5 * width;
  return {dx, std::atan2(dy, std::abs(dx)) * 180.0 / std::numbers::pi};
}

} // namespace

double clock_angle_deg(double center_x, double center_y, int width, int height) {
  const auto g = clock_geometry(center_x, center_y, width, height);
  return g.dx >= 0 ? g.angle_abs : 180.0 - g.angle_abs;
}

double hour_offset(double center_x, double center_y, int width, int height) {
  // Computed from |dx| so mirrored centers give exactly negated offsets.
  const auto g = clock_geometry(center_x, center_y, width, height);
  const double magnitude = 3.0 - g.angle_abs / 30.0;
  if (g.dx > 0) return magnitude;
  if (g.dx < 0) return -magnitude;
  return 0.0;
}

ClockHour hour_from_offset(double offset) {
  const double steps = std::ceil(std::abs(offset) - 0.5);
  int r = static_cast<int>(offset < 0 ? -steps : steps);
  r = std::clamp(r, -3, 3);
  if (r == 0) return ClockHour(12);
  return ClockHour(r < 0 ? r + 12 : r);
}

ClockHour clock_direction(const BBox &bbox, int width, int height) {
  require_bbox(bbox, width, height);
  return hour_from_offset(hour_offset(bbox.center_x(), bbox.center_y(), width, height));
}

std::string announce(const Localization &loc, const AnnounceOptions &options) {
  char buf[64];
  if (options.steps_when_near && loc.distance_m < options.near_threshold_m) {
    const long steps = std::lround(loc.distance_m / options.step_length_m);
    std::snprintf(buf, sizeof buf, ", %ld %s, %d o'clock", steps, steps == 1 ? "step" : "steps",
                  loc.hour.value());
  } else {
    std::snprintf(buf, sizeof buf, ", %.1f meters, %d o'clock", loc.distance_m, loc.hour.value());
  }
  return loc.label + buf;
}

std::optional<Localization> parse_announcement(std::string_view text) {
  const auto hour_sep = text.rfind(", ");
  if (hour_sep == std::string_view::npos) return std::nullopt;
  const std::string hour_part(text.substr(hour_sep + 2));
  const auto dist_sep = text.rfind(", ", hour_sep == 0 ? 0 : hour_sep - 1);
  if (dist_sep == std::string_view::npos || dist_sep >= hour_sep) return std::nullopt;
  const std::string dist_part(text.substr(dist_sep + 2, hour_sep - dist_sep - 2));

  constexpr std::string_view kOclock = " o'clock";
  constexpr std::string_view kMeters = " meters";
  if (hour_part.size() <= kOclock.size() ||
      hour_part.compare(hour_part.size() - kOclock.size(), kOclock.size(), kOclock) != 0) {
    return std::nullopt;
  }
  if (dist_part.size() <= kMeters.size() ||
      dist_part.compare(dist_part.size() - kMeters.size(), kMeters.size(), kMeters) != 0) {
    return std::nullopt;
  }
  const std::string hour_num = hour_part.substr(0, hour_part.size() - kOclock.size());
  const std::string dist_num = dist_part.substr(0, dist_part.size() - kMeters.size());
  char *end = nullptr;
  const long hour = std::strtol(hour_num.c_str(), &end, 10);
  if (end == hour_num.c_str() || *end != '\0') return std::nullopt;
  const double dist = std::strtod(dist_num.c_str(), &end);
  if (end == dist_num.c_str() || *end != '\0') return std::nullopt;
  try {
    return Localization{std::string(text.substr(0, dist_sep)), dist, ClockHour(static_cast<int>(hour))};
  } catch (const InvariantError &) {
    return std::nullopt;
  }
}

Localization localize(const KeyFrame &keyframe, DistanceMode mode) {
  const DepthFrame &depth = keyframe.depth;
  require_bbox(keyframe.bbox, depth.width, depth.height);
  double distance = 0;
  if (mode == DistanceMode::Slant) {
    distance = masked_mean_depth(depth, keyframe.mask);
  } else {
    if (keyframe.mask.width != depth.width || keyframe.mask.height != depth.height) {
      throw PreconditionError("localize: mask and depth dimensions differ");
    }
    const double eye2 = keyframe.pose.eye_height * keyframe.pose.eye_height;
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < keyframe.mask.bits.size(); ++i) {
      if (!keyframe.mask.bits[i]) continue;
      const double d = depth.depth[i];
      sum += std::sqrt(std::max(0.0, d * d - eye2));
      ++n;
    }
    if (n == 0) throw PreconditionError("localize: empty mask");
    distance = sum / static_cast<double>(n);
  }
  return {keyframe.target_label, distance, clock_direction(keyframe.bbox, depth.width, depth.height)};
}

int hour_distance(ClockHour a, ClockHour b) {
  const int d = std::abs(a.value() % 12 - b.value() % 12);
  return std::min(d, 12 - d);
}

} // namespace objsearch
