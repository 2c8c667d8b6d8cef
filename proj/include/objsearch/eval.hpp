#pragma once

#include "objsearch/json.hpp"
#include "objsearch/runner.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace objsearch {

/// Scripted search: say the target, confirm, then turn in place by
/// `sweep_deg` per frame until the target is announced or time runs out.
struct Episode {
  std::string name;
  std::string target;
  std::optional<CameraPose> start_pose;
  double sweep_deg = 10;
  double frame_dt_s = 0.5;
  /// Safety stop in simulated seconds, well past the scan timeout.
  double max_time_s = 300;
};

std::vector<Episode> parse_episodes(std::string_view text);
std::vector<Episode> load_episodes_file(const std::string &path);

struct EpisodeResult {
  std::string name;
  std::string target;
  bool detected = false;
  bool timed_out = false;
  double time_to_detection_s = 0; // from scan start; the timeout when not detected
  int reinit_count = 0;
  // Set when detected:
  std::string object_id;
  double distance_m = 0;
  double true_distance_m = 0;
  double distance_error_m = 0;
  int hour = 12;
  int true_hour = 12;
  int hour_error = 0;
};

struct EvalReport {
  std::string scene;
  std::vector<EpisodeResult> episodes;
};

/// Clock hour of an object's volumetric center projected into the pose's
/// image. Empty when the center is behind the camera.
std::optional<ClockHour> true_clock_hour(const Scene &scene, const CameraPose &pose,
                                         std::string_view object_id);

EpisodeResult run_episode(ScenePtr scene, const Episode &episode, const Config &config);

EvalReport evaluate(ScenePtr scene, const std::vector<Episode> &episodes, const Config &config);

Json report_to_json(const EvalReport &report);

} // namespace objsearch
