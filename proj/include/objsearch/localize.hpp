#pragma once

#include "objsearch/frame.hpp"
#include "objsearch/scene.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace objsearch {

/// Perception snapshot captured when the detection gate fires.
struct KeyFrame {
  std::string id;
  DepthFrame depth;
  BBox bbox;
  Mask mask;
  CameraPose pose;
  std::string target_label;
  double captured_at = 0; // simulated seconds

  bool operator==(const KeyFrame &) const = default;
};

/// Clock position, restricted to the forward half: 9, 10, 11, 12, 1, 2, 3.
class ClockHour {
public:
  /// Throws InvariantError outside the allowed set.
  explicit ClockHour(int hour);
  int value() const { return hour_; }
  bool operator==(const ClockHour &) const = default;

private:
  int hour_;
};

enum class DistanceMode { Slant, Horizontal };

struct Localization {
  std::string label;
  double distance_m = 0;
  ClockHour hour{12};

  bool operator==(const Localization &) const = default;
};

inline constexpr double kDefaultMaskTau = 0.5;

/// Depth-coherent foreground inside the bbox: pixels within `tau` of the
/// bbox median depth (lower middle element for even counts). Falls back to
/// the whole bbox when that selects nothing.
Mask mask_from_bbox(const BBox &bbox, const DepthFrame &depth, double tau = kDefaultMaskTau);

/// Mean depth over the set mask bits.
double masked_mean_depth(const DepthFrame &depth, const Mask &mask);

/// Angle of the bbox center seen from the bottom-edge center of the image,
/// in degrees within (0, 180): 0 is the right edge, 90 straight up.
double clock_angle_deg(double center_x, double center_y, int width, int height);

/// Signed hour offset from 12 before rounding: 3 - angle/30, in (-3, 3).
double hour_offset(double center_x, double center_y, int width, int height);

/// Rounds an hour offset to a clock position; .5 ties go toward 12.
ClockHour hour_from_offset(double offset);

ClockHour clock_direction(const BBox &bbox, int width, int height);

struct AnnounceOptions {
  /// When set, distances below `near_threshold_m` are spoken in steps.
  bool steps_when_near = false;
  double near_threshold_m = 1.0;
  double step_length_m = 0.7;
};

/// "<label>, <d.d> meters, <h> o'clock"
std::string announce(const Localization &loc, const AnnounceOptions &options = {});

/// Inverse of announce() for the meters form.
std::optional<Localization> parse_announcement(std::string_view text);

Localization localize(const KeyFrame &keyframe, DistanceMode mode = DistanceMode::Slant);

/// Clock steps between two hours (0..6).
int hour_distance(ClockHour a, ClockHour b);

} // namespace objsearch
