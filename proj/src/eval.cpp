#include "objsearch/eval.hpp"

#include "objsearch/codec.hpp"
#include "objsearch/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace objsearch {

namespace {

Episode episode_from_json(const Json &j, std::size_t index) {
  const std::string where = "episodes[" + std::to_string(index) + "]";
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  Episode e;
  try {
    e.name = j.value("name", "episode" + std::to_string(index + 1));
    e.target = j.at("target").get<std::string>();
    if (j.contains("start_pose")) e.start_pose = pose_from_json(j.at("start_pose"), {}, where + ".start_pose");
    e.sweep_deg = j.value("sweep_deg", e.sweep_deg);
    e.frame_dt_s = j.value("frame_dt_s", e.frame_dt_s);
    e.max_time_s = j.value("max_time_s", e.max_time_s);
  } catch (const Json::exception &ex) {
    throw ParseError(where + ": " + ex.what());
  }
  if (e.target.empty()) throw ParseError(where + ": empty target");
  if (!(e.frame_dt_s > 0) || !std::isfinite(e.frame_dt_s)) throw ParseError(where + ": frame_dt_s must be positive");
  if (!std::isfinite(e.sweep_deg)) throw ParseError(where + ": sweep_deg must be finite");
  if (!(e.max_time_s > 0)) throw ParseError(where + ": max_time_s must be positive");
  return e;
}

bool in(const Session &s, StateTag tag) { return tag_of(s.state) == tag; }

} // namespace

std::vector<Episode> parse_episodes(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error &ex) {
    throw ParseError(std::string("episodes: ") + ex.what());
  }
  const Json &list = j.is_object() ? j.at("episodes") : j;
  if (!list.is_array()) throw ParseError("episodes: expected a list");
  std::vector<Episode> out;
  for (std::size_t i = 0; i < list.size(); ++i) out.push_back(episode_from_json(list[i], i));
  return out;
}

std::vector<Episode> load_episodes_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read episodes file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_episodes(ss.str());
}

std::optional<ClockHour> true_clock_hour(const Scene &scene, const CameraPose &pose,
                                         std::string_view object_id) {
  const SceneObject &o = scene.at(object_id);
  const Vec3 center{o.footprint.x + o.footprint.w / 2, o.footprint.y + o.footprint.h / 2,
                    (o.base_height + o.top_height) / 2};
  const PinholeCamera cam(pose);
  const Vec3 c = cam.to_camera(center);
  if (c.z <= 0) return std::nullopt;
  const Vec2 px = cam.to_image(c);
  return hour_from_offset(hour_offset(px.x, px.y, pose.image_width, pose.image_height));
}

EpisodeResult run_episode(ScenePtr scene, const Episode &episode, const Config &config) {
  CameraPose pose = episode.start_pose ? *episode.start_pose
                    : scene->start_pose ? *scene->start_pose
                                        : CameraPose{};
  if (!episode.start_pose && !scene->start_pose) {
    pose.position = {scene->bounds.x + scene->bounds.w / 2, scene->bounds.y + scene->bounds.h / 2};
  }
  Runner runner(scene, pose, config, std::make_shared<MockFeedbackBackend>());
  runner.submit(event::Utterance{"find " + episode.target}, "eval");
  if (in(runner.session(), StateTag::ConfirmTarget)) runner.submit(event::ButtonA{}, "eval");

  EpisodeResult r;
  r.name = episode.name;
  r.target = episode.target;
  std::optional<std::int64_t> scan_start;
  const std::int64_t limit = seconds_to_us(episode.max_time_s);
  std::optional<Json> keyframe_log;

  auto watch = [&](const std::vector<TranscriptRecord> &records) {
    for (const auto &rec : records) {
      if (!scan_start && rec.state == StateTag::Scanning) scan_start = seconds_to_us(rec.t);
      for (const auto &e : rec.effects) {
        if (const auto *l = std::get_if<effect::Log>(&e); l && l->record.value("kind", "") == "keyframe") {
          keyframe_log = l->record;
        }
      }
    }
  };

  while (runner.session().now_us < limit) {
    const Session &s = runner.session();
    if (in(s, StateTag::Announcing) || in(s, StateTag::TimedOut)) break;
    if (!in(s, StateTag::Reinitializing) && !in(s, StateTag::Scanning)) break;
    if (in(s, StateTag::Scanning)) {
      if (!scan_start) scan_start = s.now_us;
      CameraPose next = s.pose;
      next.heading_deg = std::fmod(next.heading_deg + episode.sweep_deg, 360.0);
      watch(runner.submit(event::FramePose{next}, "eval"));
      if (in(runner.session(), StateTag::Announcing)) break;
    }
    watch(runner.submit(event::Tick{episode.frame_dt_s}, "eval"));
  }

  const Session &s = runner.session();
  r.reinit_count = static_cast<int>(s.reinit_count);
  r.timed_out = in(s, StateTag::TimedOut);
  const std::int64_t start = scan_start.value_or(s.now_us);
  r.time_to_detection_s = static_cast<double>(s.now_us - start) / 1e6;
  if (const auto *a = std::get_if<state::Announcing>(&s.state); a && keyframe_log) {
    r.detected = true;
    r.object_id = keyframe_log->at("object_id").get<std::string>();
    r.distance_m = a->localization.distance_m;
    r.hour = a->localization.hour.value();
    const auto view = project_object(*scene, a->keyframe->pose, r.object_id);
    r.true_distance_m = view ? view->surface_range : 0.0;
    r.distance_error_m = std::abs(r.distance_m - r.true_distance_m);
    const auto truth = true_clock_hour(*scene, a->keyframe->pose, r.object_id);
    r.true_hour = truth ? truth->value() : r.hour;
    r.hour_error = hour_distance(a->localization.hour, ClockHour(r.true_hour));
  }
  return r;
}

EvalReport evaluate(ScenePtr scene, const std::vector<Episode> &episodes, const Config &config) {
  EvalReport report;
  report.scene = scene->name;
  for (const auto &e : episodes) report.episodes.push_back(run_episode(scene, e, config));
  return report;
}

Json report_to_json(const EvalReport &report) {
  Json episodes = Json::array();
  double ttd = 0, derr = 0, dmax = 0, herr = 0, reinit = 0;
  int detected = 0, exact = 0, timed_out = 0;
  for (const auto &r : report.episodes) {
    Json j{{"name", r.name},
           {"target", r.target},
           {"detected", r.detected},
           {"timed_out", r.timed_out},
           {"time_to_detection_s", r.time_to_detection_s},
           {"reinit_count", r.reinit_count}};
    if (r.detected) {
      j["object_id"] = r.object_id;
      j["distance_m"] = r.distance_m;
      j["true_distance_m"] = r.true_distance_m;
      j["distance_error_m"] = r.distance_error_m;
      j["hour"] = r.hour;
      j["true_hour"] = r.true_hour;
      j["hour_error"] = r.hour_error;
      ++detected;
      derr += r.distance_error_m;
      dmax = std::max(dmax, r.distance_error_m);
      herr += r.hour_error;
      exact += r.hour_error == 0;
    }
    timed_out += r.timed_out;
    ttd += r.time_to_detection_s;
    reinit += r.reinit_count;
    episodes.push_back(std::move(j));
  }
  Json out{{"scene", report.scene}, {"episodes", std::move(episodes)}};
  const auto n = static_cast<double>(report.episodes.size());
  Json agg{{"count", report.episodes.size()}};
  if (!report.episodes.empty()) {
    agg["detected"] = detected;
    agg["timed_out"] = timed_out;
    agg["mean_time_to_detection_s"] = ttd / n;
    agg["mean_reinit_count"] = reinit / n;
    if (detected > 0) {
      agg["mean_distance_error_m"] = derr / detected;
      agg["max_distance_error_m"] = dmax;
      agg["mean_hour_error"] = herr / detected;
      agg["exact_hour_rate"] = static_cast<double>(exact) / detected;
    }
  }
  out["aggregate"] = std::move(agg);
  return out;
}

} // namespace objsearch
