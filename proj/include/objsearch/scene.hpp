#pragma once

#include "objsearch/frame.hpp"
#include "objsearch/json.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace objsearch {

struct Vec2 {
  double x = 0;
  double y = 0;
  bool operator==(const Vec2 &) const = default;
};

struct Vec3 {
  double x = 0;
  double y = 0;
  double z = 0;
  bool operator==(const Vec3 &) const = default;
};

/// Axis-aligned rectangle on the floor plane, (x, y) is the minimum corner.
struct Rect {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  double area() const { return w * h; }
  Vec2 center() const { return {x + 0.5 * w, y + 0.5 * h}; }
  bool contains(Vec2 p) const { return p.x >= x && p.x <= x + w && p.y >= y && p.y <= y + h; }
  bool contains(const Rect &r) const {
    return r.x >= x && r.y >= y && r.x + r.w <= x + w && r.y + r.h <= y + h;
  }
  bool operator==(const Rect &) const = default;
};

struct SceneObject {
  std::string id;
  std::string label;
  Rect footprint;
  double base_height = 0;
  double top_height = 0;
  std::map<std::string, std::string> attributes;
  std::optional<std::string> on_top_of;

  bool operator==(const SceneObject &) const = default;
};

/// Egocentric camera, heading counterclockwise from +x. Pitch tilts the view
/// up (positive) or down (negative); there is no roll.
struct CameraPose {
  Vec2 position;
  double heading_deg = 0;
  double pitch_deg = 0;
  double eye_height = 1.6;
  double hfov_deg = 60;
  double vfov_deg = 46.826;
  int image_width = 640;
  int image_height = 480;

  bool operator==(const CameraPose &) const = default;
};

/// The static world. Immutable after load; share it through ScenePtr.
struct Scene {
  std::string name;
  Rect bounds;
  std::vector<SceneObject> objects;
  /// Suggested starting pose, when the scene file provides one.
  std::optional<CameraPose> start_pose;

  const SceneObject *find(std::string_view id) const;
  const SceneObject &at(std::string_view id) const;

  bool operator==(const Scene &) const = default;
};

using ScenePtr = std::shared_ptr<const Scene>;

void validate(const CameraPose &pose);

/// Strictly inside the scene bounds.
bool pose_inside(const Rect &bounds, const CameraPose &pose);

/// Keys: x, y, heading_deg, and optionally pitch_deg, eye_height, hfov_deg, vfov_deg,
/// image_width, image_height. Missing keys keep the values of `base`.
CameraPose pose_from_json(const Json &j, const CameraPose &base = {}, const std::string &path = "pose");
Json pose_to_json(const CameraPose &pose);

/// Throws InvariantError naming the offending object.
void validate(const Scene &scene);

struct Ray {
  Vec3 origin;
  Vec3 dir; // unit length
};

/// Pinhole model for a CameraPose. Camera axes: right, down, forward.
class PinholeCamera {
public:
  explicit PinholeCamera(const CameraPose &pose);

  /// Ray through the center of pixel (u, v).
  Ray pixel_ray(int u, int v) const;

  /// World point to (right, down, forward) camera coordinates.
  Vec3 to_camera(const Vec3 &world) const;

  /// Camera coordinates (forward > 0) to continuous image coordinates.
  Vec2 to_image(const Vec3 &cam) const;

  Vec3 eye() const { return eye_; }
  const CameraPose &pose() const { return pose_; }
  double fx() const { return fx_; }
  double fy() const { return fy_; }

private:
  CameraPose pose_;
  Vec3 eye_;
  Vec3 forward_;
  Vec3 right_;
  Vec3 down_;
  double fx_;
  double fy_;
  double cx_;
  double cy_;
};

/// Entry distance of a ray into a closed box, or exit distance when the
/// origin is inside. Empty when missed or only touched behind the origin.
std::optional<double> intersect_box(const Ray &ray, const Vec3 &lo, const Vec3 &hi);

/// Distance along the ray to the enclosing walls of `bounds` (infinite
/// vertical planes). The origin must lie inside.
double wall_distance(const Ray &ray, const Rect &bounds);

Scene load_scene(std::string_view descriptor);
Scene load_scene_file(const std::string &path);

DepthFrame render_depth(const Scene &scene, const CameraPose &pose, double max_range = 10.0);

/// Result of projecting one object into the camera.
struct ObjectView {
  BBox bbox;
  /// Unoccluded in-frustum fraction of the camera-facing surface area.
  double visibility = 0;
  /// Area-weighted mean slant distance over the visible surface samples.
  double surface_range = 0;
};

/// Default spacing of surface samples used for visibility, meters.
inline constexpr double kSurfaceSampleSpacing = 0.05;

std::optional<ObjectView> project_object(const Scene &scene, const CameraPose &pose,
                                         std::string_view object_id,
                                         double sample_spacing = kSurfaceSampleSpacing);

struct GroundTruthDetection {
  std::string object_id;
  std::string label;
  BBox bbox;
  double visibility = 0;
  double confidence = 0;
  double range = 0;

  bool operator==(const GroundTruthDetection &) const = default;
};

struct DetectionOptions {
  double max_range = 10.0;
  /// Multiplicative jitter amplitude drawn from the seed; 0 reproduces the
  /// plain confidence formula.
  double confidence_noise = 0.0;
};

class Vocabulary;

/// Synthetic open-vocabulary detector. Confidence is
/// visibility * max(0, 1 - range / max_range) * 0.95.
std::vector<GroundTruthDetection> synth_detect(const Scene &scene, const CameraPose &pose,
                                               const Vocabulary &vocab, std::uint64_t seed,
                                               const DetectionOptions &options = {});

inline constexpr double kDetectorPeakConfidence = 0.95;

std::vector<std::string> list_visible_labels(const Scene &scene, const CameraPose &pose);

} // namespace objsearch
