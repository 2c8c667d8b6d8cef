#pragma once

#include "objsearch/scene.hpp"

#include <memory>
#include <string>

namespace objsearch::testing {

inline std::string fixture(const std::string &rel) { return std::string(OBJSEARCH_FIXTURES_DIR) + "/" + rel; }

inline ScenePtr office() {
  static const ScenePtr scene = std::make_shared<const Scene>(load_scene_file(fixture("scenes/office.json")));
  return scene;
}

inline ScenePtr living_room() {
  static const ScenePtr scene =
      std::make_shared<const Scene>(load_scene_file(fixture("scenes/living_room.json")));
  return scene;
}

inline CameraPose pose_at(double x, double y, double heading, double pitch = 0) {
  CameraPose p;
  p.position = {x, y};
  p.heading_deg = heading;
  p.pitch_deg = pitch;
  return p;
}

/// Small image for brute-force oracles.
inline CameraPose small_pose(double x, double y, double heading, int w = 48, int h = 36) {
  CameraPose p = pose_at(x, y, heading);
  p.image_width = w;
  p.image_height = h;
  return p;
}

} // namespace objsearch::testing
