#include "objsearch/scene.hpp"

#include "objsearch/error.hpp"
#include "objsearch/json.hpp"
#include "objsearch/vocab.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

namespace objsearch {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

double component(const Vec3 &v, int axis) { return axis == 0 ? v.x : axis == 1 ? v.y : v.z; }

Vec3 box_lo(const SceneObject &o) { return {o.footprint.x, o.footprint.y, o.base_height}; }
Vec3 box_hi(const SceneObject &o) {
  return {o.footprint.x + o.footprint.w, o.footprint.y + o.footprint.h, o.top_height};
}

} // namespace

const SceneObject *Scene::find(std::string_view id) const {
  for (const auto &o : objects) {
    if (o.id == id) return &o;
  }
  return nullptr;
}

const SceneObject &Scene::at(std::string_view id) const {
  if (const auto *o = find(id)) return *o;
  throw PreconditionError("unknown object id '" + std::string(id) + "'");
}

void validate(const CameraPose &pose) {
  if (!(pose.hfov_deg > 0 && pose.hfov_deg < 180)) throw InvariantError("pose: hfov out of (0,180)");
  if (!(pose.vfov_deg > 0 && pose.vfov_deg < 180)) throw InvariantError("pose: vfov out of (0,180)");
  if (pose.image_width < 16 || pose.image_height < 16) {
    throw InvariantError("pose: image dimensions must be >= 16");
  }
  if (!(pose.eye_height > 0)) throw InvariantError("pose: eye_height must be positive");
  if (!(pose.pitch_deg > -90 && pose.pitch_deg < 90)) throw InvariantError("pose: pitch out of (-90,90)");
  if (!std::isfinite(pose.heading_deg) || !std::isfinite(pose.position.x) ||
      !std::isfinite(pose.position.y)) {
    throw InvariantError("pose: non-finite position or heading");
  }
}

void validate(const Scene &scene) {
  if (!(scene.bounds.w > 0 && scene.bounds.h > 0)) {
    throw InvariantError("scene '" + scene.name + "': bounds must have positive size");
  }
  std::set<std::string> ids;
  for (const auto &o : scene.objects) {
    if (o.id.empty()) throw InvariantError("object with empty id");
    if (!ids.insert(o.id).second) throw InvariantError("object '" + o.id + "': duplicate id");
    if (o.label.empty()) throw InvariantError("object '" + o.id + "': empty label");
    if (!(o.base_height >= 0 && o.top_height > o.base_height)) {
      throw InvariantError("object '" + o.id + "': requires top_height > base_height >= 0");
    }
    if (!(o.footprint.w > 0 && o.footprint.h > 0)) {
      throw InvariantError("object '" + o.id + "': footprint must have positive area");
    }
    if (!scene.bounds.contains(o.footprint)) {
      throw InvariantError("object '" + o.id + "': footprint outside scene bounds");
    }
  }
  for (const auto &o : scene.objects) {
    if (!o.on_top_of) continue;
    const SceneObject *support = scene.find(*o.on_top_of);
    if (support == nullptr) {
      throw InvariantError("object '" + o.id + "': on_top_of references missing id '" +
                           *o.on_top_of + "'");
    }
    if (support == &o) throw InvariantError("object '" + o.id + "': rests on itself");
    if (support->top_height > o.base_height) {
      throw InvariantError("object '" + o.id + "': support '" + support->id +
                           "' is taller than its base_height");
    }
  }
}

PinholeCamera::PinholeCamera(const CameraPose &pose) : pose_(pose) {
  const double h = deg2rad(pose.heading_deg);
  eye_ = {pose.position.x, pose.position.y, pose.eye_height};
  const double p = deg2rad(pose.pitch_deg);
  forward_ = {std::cos(h) * std::cos(p), std::sin(h) * std::cos(p), std::sin(p)};
  right_ = {std::sin(h), -std::cos(h), 0.0};
  down_ = {std::cos(h) * std::sin(p), std::sin(h) * std::sin(p), -std::cos(p)};
  cx_ = 0.5 * pose.image_width;
  cy_ = 0.5 * pose.image_height;
  fx_ = cx_ / std::tan(0.5 * deg2rad(pose.hfov_deg));
  fy_ = cy_ / std::tan(0.5 * deg2rad(pose.vfov_deg));
}

Ray PinholeCamera::pixel_ray(int u, int v) const {
  const double a = (u + 0.5 - cx_) / fx_;
  const double b = (v + 0.5 - cy_) / fy_;
  Vec3 d = forward_ + a * right_ + b * down_;
  d = (1.0 / norm(d)) * d;
  return {eye_, d};
}

Vec3 PinholeCamera::to_camera(const Vec3 &world) const {
  const Vec3 d = world - eye_;
  return {dot(d, right_), dot(d, down_), dot(d, forward_)};
}

Vec2 PinholeCamera::to_image(const Vec3 &cam) const {
  return {cx_ + fx_ * cam.x / cam.z, cy_ + fy_ * cam.y / cam.z};
}

std::optional<double> intersect_box(const Ray &ray, const Vec3 &lo, const Vec3 &hi) {
  double t_near = -kInf;
  double t_far = kInf;
  for (int axis = 0; axis < 3; ++axis) {
    const double o = component(ray.origin, axis);
    const double d = component(ray.dir, axis);
    const double l = component(lo, axis);
    const double h = component(hi, axis);
    if (d == 0.0) {
      if (o < l || o > h) return std::nullopt;
      continue;
    }
    double t1 = (l - o) / d;
    double t2 = (h - o) / d;
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far) return std::nullopt;
  if (t_near > 0) return t_near;
  if (t_far > 0) return t_far;
  return std::nullopt;
}

double wall_distance(const Ray &ray, const Rect &bounds) {
  double t = kInf;
  if (ray.dir.x > 0) t = std::min(t, (bounds.x + bounds.w - ray.origin.x) / ray.dir.x);
  if (ray.dir.x < 0) t = std::min(t, (bounds.x - ray.origin.x) / ray.dir.x);
  if (ray.dir.y > 0) t = std::min(t, (bounds.y + bounds.h - ray.origin.y) / ray.dir.y);
  if (ray.dir.y < 0) t = std::min(t, (bounds.y - ray.origin.y) / ray.dir.y);
  return t;
}

namespace {

SceneObject parse_object(const Json &j, const std::string &path) {
  namespace jf = json_field;
  SceneObject o;
  o.id = jf::string(j, "id", path);
  o.label = jf::string(j, "label", path);
  const std::string fp_path = path + ".footprint";
  const Json &fp = jf::object(j, "footprint", path);
  o.footprint = {jf::number(fp, "x", fp_path), jf::number(fp, "y", fp_path),
                 jf::number(fp, "w", fp_path), jf::number(fp, "h", fp_path)};
  o.base_height = jf::number(j, "base_height", path);
  o.top_height = jf::number(j, "top_height", path);
  if (j.contains("attributes")) {
    const Json &attrs = jf::object(j, "attributes", path);
    for (const auto &[k, v] : attrs.items()) {
      if (v.is_string()) {
        o.attributes[k] = v.get<std::string>();
      } else if (v.is_number() || v.is_boolean()) {
        o.attributes[k] = v.dump();
      } else {
        throw ParseError(path + ".attributes." + k + ": expected string or number");
      }
    }
  }
  if (j.contains("on_top_of") && !j.at("on_top_of").is_null()) {
    o.on_top_of = jf::string(j, "on_top_of", path);
  }
  return o;
}

} // namespace

Scene load_scene(std::string_view descriptor) {
  namespace jf = json_field;
  const Json doc = parse_json(descriptor, "scene");
  Scene scene;
  scene.name = jf::string(doc, "name", "");
  const Json &b = jf::object(doc, "bounds", "");
  scene.bounds = {0, 0, jf::number(b, "w", "bounds"), jf::number(b, "h", "bounds")};
  const Json &objs = jf::array(doc, "objects", "");
  for (std::size_t i = 0; i < objs.size(); ++i) {
    scene.objects.push_back(parse_object(objs[i], "objects[" + std::to_string(i) + "]"));
  }
  if (doc.contains("start_pose")) {
    scene.start_pose = pose_from_json(doc.at("start_pose"), {}, "start_pose");
    validate(*scene.start_pose);
    if (!pose_inside(scene.bounds, *scene.start_pose)) {
      throw InvariantError("start_pose lies outside the scene bounds");
    }
  }
  validate(scene);
  return scene;
}

bool pose_inside(const Rect &b, const CameraPose &pose) {
  return pose.position.x > b.x && pose.position.x < b.x + b.w && pose.position.y > b.y &&
         pose.position.y < b.y + b.h;
}

CameraPose pose_from_json(const Json &j, const CameraPose &base, const std::string &path) {
  namespace jf = json_field;
  if (!j.is_object()) throw ParseError(path + ": expected an object");
  CameraPose p = base;
  p.position.x = jf::number_or(j, "x", p.position.x, path);
  p.position.y = jf::number_or(j, "y", p.position.y, path);
  p.heading_deg = jf::number_or(j, "heading_deg", p.heading_deg, path);
  p.pitch_deg = jf::number_or(j, "pitch_deg", p.pitch_deg, path);
  p.eye_height = jf::number_or(j, "eye_height", p.eye_height, path);
  p.hfov_deg = jf::number_or(j, "hfov_deg", p.hfov_deg, path);
  p.vfov_deg = jf::number_or(j, "vfov_deg", p.vfov_deg, path);
  if (j.contains("image_width")) p.image_width = static_cast<int>(jf::integer(j, "image_width", path));
  if (j.contains("image_height")) p.image_height = static_cast<int>(jf::integer(j, "image_height", path));
  try {
    validate(p);
  } catch (const InvariantError &e) {
    throw InvariantError(path + ": " + e.what());
  }
  return p;
}

Json pose_to_json(const CameraPose &pose) {
  return Json{{"x", pose.position.x},           {"y", pose.position.y},
              {"heading_deg", pose.heading_deg}, {"pitch_deg", pose.pitch_deg},
              {"eye_height", pose.eye_height},
              {"hfov_deg", pose.hfov_deg},       {"vfov_deg", pose.vfov_deg},
              {"image_width", pose.image_width}, {"image_height", pose.image_height}};
}

Scene load_scene_file(const std::string &path) {
  try {
    return load_scene(read_file(path));
  } catch (const ParseError &e) {
    throw ParseError(path + ": " + e.what());
  } catch (const InvariantError &e) {
    throw InvariantError(path + ": " + e.what());
  }
}

namespace {

void require_inside(const Scene &scene, const CameraPose &pose) {
  validate(pose);
  if (!pose_inside(scene.bounds, pose)) {
    throw PreconditionError("pose outside scene bounds");
  }
}

} // namespace

DepthFrame render_depth(const Scene &scene, const CameraPose &pose, double max_range) {
  require_inside(scene, pose);
  if (!(max_range > 0)) throw PreconditionError("max_range must be positive");
  const PinholeCamera cam(pose);
  DepthFrame frame;
  frame.width = pose.image_width;
  frame.height = pose.image_height;
  frame.max_range = max_range;
  frame.depth.resize(static_cast<std::size_t>(frame.width) * static_cast<std::size_t>(frame.height));

  std::vector<std::pair<Vec3, Vec3>> boxes;
  boxes.reserve(scene.objects.size());
  for (const auto &o : scene.objects) boxes.emplace_back(box_lo(o), box_hi(o));

  std::size_t i = 0;
  for (int v = 0; v < frame.height; ++v) {
    for (int u = 0; u < frame.width; ++u, ++i) {
      const Ray ray = cam.pixel_ray(u, v);
      double t = wall_distance(ray, scene.bounds);
      for (const auto &[lo, hi] : boxes) {
        if (auto hit = intersect_box(ray, lo, hi); hit && *hit < t) t = *hit;
      }
      frame.depth[i] = static_cast<float>(std::min(t, max_range));
    }
  }
  return frame;
}

namespace {

struct SurfaceSample {
  Vec3 point;
  double weight;
};

/// Samples on the faces of `o` that face the eye.
std::vector<SurfaceSample> facing_samples(const SceneObject &o, const Vec3 &eye, double spacing) {
  const Vec3 lo = box_lo(o);
  const Vec3 hi = box_hi(o);
  std::vector<SurfaceSample> out;
  for (int axis = 0; axis < 3; ++axis) {
    const int ua = (axis + 1) % 3;
    const int va = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      const double plane = side == 0 ? component(lo, axis) : component(hi, axis);
      const double e = component(eye, axis);
      const bool facing = side == 0 ? e < plane : e > plane;
      if (!facing) continue;
      const double u0 = component(lo, ua), u1 = component(hi, ua);
      const double v0 = component(lo, va), v1 = component(hi, va);
      const int nu = std::max(1, static_cast<int>(std::ceil((u1 - u0) / spacing - 1e-9)));
      const int nv = std::max(1, static_cast<int>(std::ceil((v1 - v0) / spacing - 1e-9)));
      const double w = (u1 - u0) * (v1 - v0) / (static_cast<double>(nu) * nv);
      for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
          double c[3];
          c[axis] = plane;
          c[ua] = u0 + (i + 0.5) * (u1 - u0) / nu;
          c[va] = v0 + (j + 0.5) * (v1 - v0) / nv;
          out.push_back({{c[0], c[1], c[2]}, w});
        }
      }
    }
  }
  return out;
}

std::optional<BBox> corner_bbox(const SceneObject &o, const PinholeCamera &cam) {
  constexpr double kNear = 1e-3;
  const Vec3 lo = box_lo(o);
  const Vec3 hi = box_hi(o);
  std::array<Vec3, 8> corners;
  for (int k = 0; k < 8; ++k) {
    corners[k] = cam.to_camera({(k & 1) ? hi.x : lo.x, (k & 2) ? hi.y : lo.y, (k & 4) ? hi.z : lo.z});
  }
  double x0 = kInf, y0 = kInf, x1 = -kInf, y1 = -kInf;
  bool any = false;
  auto add = [&](const Vec3 &c) {
    const Vec2 p = cam.to_image(c);
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
    any = true;
  };
  for (const auto &c : corners) {
    if (c.z >= kNear) add(c);
  }
  // Edges differ in exactly one bit of the corner index.
  for (int a = 0; a < 8; ++a) {
    for (int bit = 1; bit < 8; bit <<= 1) {
      const int b = a | bit;
      if (b == a) continue;
      const Vec3 &p = corners[a];
      const Vec3 &q = corners[b];
      if ((p.z < kNear) == (q.z < kNear)) continue;
      const double s = (kNear - p.z) / (q.z - p.z);
      add({p.x + s * (q.x - p.x), p.y + s * (q.y - p.y), kNear});
    }
  }
  if (!any) return std::nullopt;
  const auto &pose = cam.pose();
  BBox box{std::max(x0, 0.0), std::max(y0, 0.0), std::min(x1, double(pose.image_width)),
           std::min(y1, double(pose.image_height))};
  if (!(box.x_min < box.x_max && box.y_min < box.y_max)) return std::nullopt;
  return box;
}

} // namespace

std::optional<ObjectView> project_object(const Scene &scene, const CameraPose &pose,
                                         std::string_view object_id, double sample_spacing) {
  const SceneObject &target = scene.at(object_id);
  validate(pose);
  if (!(sample_spacing > 0)) throw PreconditionError("sample spacing must be positive");
  const PinholeCamera cam(pose);
  const Vec3 eye = cam.eye();

  double facing_weight = 0;
  double visible_weight = 0;
  double range_sum = 0;
  for (const auto &s : facing_samples(target, eye, sample_spacing)) {
    facing_weight += s.weight;
    const Vec3 c = cam.to_camera(s.point);
    if (c.z <= 1e-9) continue;
    const Vec2 px = cam.to_image(c);
    if (px.x < 0 || px.x >= pose.image_width || px.y < 0 || px.y >= pose.image_height) continue;
    const Vec3 delta = s.point - eye;
    const double dist = norm(delta);
    const Ray ray{eye, (1.0 / dist) * delta};
    bool occluded = false;
    for (const auto &other : scene.objects) {
      if (other.id == target.id) continue;
      auto hit = intersect_box(ray, box_lo(other), box_hi(other));
      if (hit && *hit < dist - 1e-9) {
        occluded = true;
        break;
      }
    }
    if (occluded) continue;
    visible_weight += s.weight;
    range_sum += s.weight * dist;
  }
  if (facing_weight <= 0 || visible_weight <= 0) return std::nullopt;
  auto bbox = corner_bbox(target, cam);
  if (!bbox) return std::nullopt;
  return ObjectView{*bbox, visible_weight / facing_weight, range_sum / visible_weight};
}

namespace {

// Stable across standard libraries, unlike std::hash.
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace

std::vector<GroundTruthDetection> synth_detect(const Scene &scene, const CameraPose &pose,
                                               const Vocabulary &vocab, std::uint64_t seed,
                                               const DetectionOptions &options) {
  std::vector<GroundTruthDetection> out;
  for (const auto &o : scene.objects) {
    if (!vocab.contains(o.label)) continue;
    auto view = project_object(scene, pose, o.id);
    if (!view) continue;
    double confidence = view->visibility *
                        std::max(0.0, 1.0 - view->surface_range / options.max_range) *
                        kDetectorPeakConfidence;
    if (options.confidence_noise > 0) {
      std::mt19937_64 rng(seed ^ fnv1a(o.id));
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      confidence = std::clamp(confidence * (1.0 + options.confidence_noise * unit(rng)), 0.0, 1.0);
    }
    out.push_back({o.id, o.label, view->bbox, view->visibility, confidence, view->surface_range});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto &a, const auto &b) {
    return a.confidence > b.confidence;
  });
  return out;
}

std::vector<std::string> list_visible_labels(const Scene &scene, const CameraPose &pose) {
  struct Seen {
    std::string label;
    double area;
  };
  std::vector<Seen> seen;
  for (const auto &o : scene.objects) {
    if (auto view = project_object(scene, pose, o.id)) seen.push_back({o.label, view->bbox.area()});
  }
  std::stable_sort(seen.begin(), seen.end(),
                   [](const Seen &a, const Seen &b) { return a.area > b.area; });
  std::vector<std::string> labels;
  std::set<std::string> folded;
  for (const auto &s : seen) {
    if (folded.insert(fold_case(s.label)).second) labels.push_back(s.label);
  }
  return labels;
}

} // namespace objsearch
