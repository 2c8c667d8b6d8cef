// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.

#include "objsearch/error.hpp"
#include "objsearch/feedback.hpp"
#include "objsearch/localize.hpp"
#include "objsearch/runner.hpp"
#include "objsearch/session.hpp"
#include "objsearch/vocab.hpp"

#include "fuzz.hpp"
#include "golden.hpp"
#include "protocol_samples.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

using namespace objsearch;
using namespace objsearch::testing;

namespace {

constexpr double kMeanRelTol = 1e-9;
constexpr double kMeanBudget_s = 5.0;
constexpr double kArctanTolDeg = 1e-9;
constexpr double kRecoveryAbsTol_m = 0.1;
constexpr double kRecoveryRelTol = 0.05;
constexpr double kRecoveryBoundaryMarginDeg = 3.0;
constexpr double kRecoveryBudget_s = 10.0;
constexpr std::size_t kFuzzSequences = 10000;
constexpr std::size_t kFuzzLength = 30;

struct Outcome {
  bool ok = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char *f, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Masked mean depth

long double pairwise(const std::vector<long double> &v, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 2) {
    long double s = 0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise(v, lo, mid) + pairwise(v, mid, hi);
}

Outcome masked_mean_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dim(1, 64);
  std::uniform_real_distribution<float> depth(0.05f, 12.0f);
  double worst = 0;
  int uniform_misses = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = dim(rng), h = dim(rng);
    DepthFrame d;
    d.width = w;
    d.height = h;
    d.depth.resize(static_cast<std::size_t>(w * h));
    Mask m(w, h);
    std::bernoulli_distribution on(std::uniform_real_distribution<double>(0.05, 1.0)(rng));
    for (auto &b : m.bits) b = on(rng);
    m.bits[rng() % m.bits.size()] = 1;
    const bool uniform = trial % 10 == 0;
    const float u = depth(rng);
    for (auto &v : d.depth) v = uniform ? u : depth(rng);

    std::vector<long double> picked;
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
      if (m.bits[i]) picked.push_back(d.depth[i]);
    }
    const double oracle = static_cast<double>(pairwise(picked, 0, picked.size()) / picked.size());
    const double got = masked_mean_depth(d, m);
    if (uniform && got != static_cast<double>(u)) ++uniform_misses;
    worst = std::max(worst, std::abs(got - oracle) / oracle);
  }
  const double secs = seconds_since(t0);
  return {worst <= kMeanRelTol && uniform_misses == 0 && secs < kMeanBudget_s,
          fmt("max rel err %.3g, uniform misses %.0f, %.2f s", worst, uniform_misses, secs)};
}

// Clock direction

int hour_of_offset(double off) {
  // Nearest integer with .5 going toward zero, mapped onto the dial.
  double r = std::round(off);
  if (std::abs(off - std::trunc(off)) == 0.5) r = std::trunc(off);
  const long n = std::lround(r);
  return n <= 0 ? static_cast<int>(n + 12) : static_cast<int>(n);
}

BBox box_at(double x, double y, int w, int h) {
  const double half = std::min({0.5, x, w - x, y, h - y}) / 2;
  return {x - half, y - half, x + half, y + half};
}

Outcome clock_equivalence() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> X(0, 640), Y(0, 480);
  double worst = 0;
  int out_of_range = 0, hour_mismatch = 0, n = 0;
  while (n < 10000) {
    const double x = X(rng), y = Y(rng);
    if (x == 320 || std::min({x, 640 - x, y, 480 - y}) < 1e-6) continue;
    ++n;
    const double theta = std::atan((480 - y) / (320 - x)) * 180 / std::numbers::pi;
    const double phi = x > 320 ? -theta : 180 - theta;
    worst = std::max(worst, std::abs(clock_angle_deg(x, y, 640, 480) - phi));
    const int h = clock_direction(box_at(x, y, 640, 480), 640, 480).value();
    if (!(h == 9 || h == 10 || h == 11 || h == 12 || h == 1 || h == 2 || h == 3)) ++out_of_range;
    if (h != hour_of_offset(3 - phi / 30)) ++hour_mismatch;
  }
  int mirror_fail = 0;
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j < 64; ++j) {
      const double x = 5 + 10 * i, y = 3.75 + 7.5 * j;
      const int a = clock_direction({x - 1, y - 1, x + 1, y + 1}, 640, 480).value();
      const int b = clock_direction({639 - x, y - 1, 641 - x, y + 1}, 640, 480).value();
      if (b != (a == 12 ? 12 : 12 - a)) ++mirror_fail;
    }
  }
  return {worst <= kArctanTolDeg && out_of_range == 0 && hour_mismatch == 0 && mirror_fail == 0,
          fmt("max angle err %.3g deg, %.0f off-dial, %.0f mirror failures", worst, out_of_range + hour_mismatch,
              mirror_fail)};
}

// Ground-truth recovery on random single-object rooms

struct RecoveryCase {
  ScenePtr scene;
  CameraPose pose;
};

std::optional<RecoveryCase> random_case(std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> U(0, 1);
  auto scene = std::make_shared<Scene>();
  scene->name = "random";
  scene->bounds = {0, 0, 14, 14};
  const double slant = 0.5 + 5.5 * U(rng);
  const double size = std::min(0.6, 0.12 + 0.25 * slant * U(rng));
  const double tall = std::min(1.2, 0.15 + 0.3 * slant * U(rng));
  const double base = U(rng) < 0.5 ? 0.0 : 0.4 + 0.5 * U(rng);
  const double zc = base + tall / 2;
  const double dz = zc - 1.6;
  if (std::abs(dz) >= slant) return std::nullopt;
  const double horiz = std::sqrt(slant * slant - dz * dz);
  const double bearing = (U(rng) - 0.5) * 50 * std::numbers::pi / 180;
  const double heading = 360 * U(rng);
  CameraPose pose;
  pose.position = {7, 7};
  pose.heading_deg = heading;
  pose.pitch_deg = std::atan2(dz, horiz) * 180 / std::numbers::pi + (U(rng) - 0.5) * 20;
  if (std::abs(pose.pitch_deg) >= 89) return std::nullopt;
  const double a = heading * std::numbers::pi / 180 + bearing;
  const Vec2 c{7 + horiz * std::cos(a), 7 + horiz * std::sin(a)};
  SceneObject o;
  o.id = "target";
  o.label = "widget";
  o.footprint = {c.x - size / 2, c.y - size / 2, size, size};
  o.base_height = base;
  o.top_height = base + tall;
  if (o.footprint.contains(pose.position)) return std::nullopt;
  scene->objects.push_back(o);
  validate(*scene);
  const auto view = project_object(*scene, pose, "target");
  if (!view || view->visibility < 0.999) return std::nullopt; // keep the whole object in frame
  return RecoveryCase{scene, pose};
}

Outcome ground_truth_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(303);
  int cases = 0, dist_fail = 0, hour_fail = 0, hour_checked = 0;
  double worst_ratio = 0, worst_vs_perfect = 0;
  std::string first;
  while (cases < 100) {
    const auto rc = random_case(rng);
    if (!rc) continue;
    ++cases;
    const auto &scene = *rc->scene;
    const auto dets = synth_detect(scene, rc->pose, Vocabulary({"widget"}), 0);
    if (dets.empty()) {
      ++dist_fail;
      continue;
    }
    KeyFrame kf;
    kf.pose = rc->pose;
    kf.depth = render_depth(scene, rc->pose);
    kf.bbox = dets[0].bbox;
    kf.mask = mask_from_bbox(kf.bbox, kf.depth);
    kf.target_label = "widget";
    const Localization loc = localize(kf);

    // Truth is the simulator's slant distance of the object, the same value the detector reports.
    const double truth = project_object(scene, rc->pose, "target")->surface_range;
    // Diagnostic only: the masked mean over a perfect object mask.
    {
      const auto &o = scene.objects[0];
      const PinholeCamera cam(rc->pose);
      const Vec3 lo{o.footprint.x, o.footprint.y, o.base_height};
      const Vec3 hi{o.footprint.x + o.footprint.w, o.footprint.y + o.footprint.h, o.top_height};
      long double sum = 0;
      long n = 0;
      for (int v = 0; v < rc->pose.image_height; ++v) {
        for (int u = 0; u < rc->pose.image_width; ++u) {
          if (const auto hit = intersect_box(cam.pixel_ray(u, v), lo, hi)) {
            sum += *hit;
            ++n;
          }
        }
      }
      if (n > 0) worst_vs_perfect = std::max(worst_vs_perfect, std::abs(loc.distance_m - double(sum / n)) / double(sum / n));
    }
    const double tol = std::max(kRecoveryAbsTol_m, kRecoveryRelTol * truth);
    const double err = std::abs(loc.distance_m - truth);
    worst_ratio = std::max(worst_ratio, err / tol);
    if (err > tol) {
      ++dist_fail;
      if (first.empty()) first = fmt("; first miss: %.3f vs %.3f m", loc.distance_m, truth);
    }

    // True angle of the object's volumetric center.
    const auto &o = scene.objects[0];
    const PinholeCamera cam(rc->pose);
    const Vec2 c = o.footprint.center();
    const Vec2 px = cam.to_image(cam.to_camera({c.x, c.y, 0.5 * (o.base_height + o.top_height)}));
    if (px.y >= rc->pose.image_height) continue;
    const double phi = clock_angle_deg(px.x, px.y, rc->pose.image_width, rc->pose.image_height);
    const double off = std::abs(std::fmod(phi - 15, 30.0));
    if (std::min(off, 30 - off) < kRecoveryBoundaryMarginDeg) continue;
    ++hour_checked;
    if (loc.hour.value() != hour_of_offset(3 - phi / 30)) ++hour_fail;
  }
  const double secs = seconds_since(t0);
  return {dist_fail == 0 && hour_fail == 0 && secs < kRecoveryBudget_s,
          fmt("distance misses %.0f/100 (worst err/tol %.2f), ", dist_fail, worst_ratio) +
              fmt("hour misses %.0f/%.0f, %.2f s", hour_fail, hour_checked, secs) +
              fmt("; vs perfect-mask mean within %.2g%%", 100 * worst_vs_perfect) + first};
}

// Target matching

class StubProvider final : public EmbeddingProvider {
public:
  explicit StubProvider(std::map<std::string, std::vector<double>> table) : table_(std::move(table)) {}
  EmbeddingVector embed(std::string_view text) const override { return {table_.at(std::string(text))}; }

private:
  std::map<std::string, std::vector<double>> table_;
};

std::string word(std::mt19937_64 &rng) {
  static const char *syll[] = {"ta", "ble", "so", "fa", "lam", "p", "cha", "ir", "de", "sk", "mo", "ni", "tor", "cu", "p"};
  std::string w;
  for (int i = 1 + static_cast<int>(rng() % 3); i > 0; --i) w += syll[rng() % std::size(syll)];
  return w;
}

Outcome matching_thresholds() {
  std::vector<std::string> fails;
  const Vocabulary vocab({"sofa", "lamp"});
  StubProvider at({{"couch", {1, 0}}, {"sofa", {4, 3}}, {"lamp", {0, 1}}});
  const auto r = classify_target({"", "couch"}, vocab, at, 0.8);
  if (!std::holds_alternative<Related>(r) || std::get<Related>(r).score != 0.8) fails.push_back("0.8 not Related");
  const double c = 0.79;
  StubProvider below({{"couch", {1, 0}}, {"sofa", {c, std::sqrt(1 - c * c)}}, {"lamp", {0, 1}}});
  if (!std::holds_alternative<Unrelated>(classify_target({"", "couch"}, vocab, below, 0.8))) {
    fails.push_back("0.79 not Unrelated");
  }
  StubProvider none({});
  const auto re = classify_target(normalize_query("Find the chair, no, office chair."),
                                  Vocabulary({"chair", "office chair"}), none);
  if (re != MatchOutcome(Match{"office chair"})) fails.push_back("rephrased utterance");

  std::mt19937_64 rng(404);
  const TrigramEmbedder e;
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> labels;
    for (int i = 1 + static_cast<int>(rng() % 50); i > 0; --i) {
      const auto w = word(rng);
      if (std::find(labels.begin(), labels.end(), w) == labels.end()) labels.push_back(w);
    }
    const Vocabulary v(labels);
    const TargetQuery q{"", word(rng)};
    if (substring_match(q, v)) continue;
    double best = -2;
    std::string best_label;
    for (const auto &l : labels) {
      const double s = cosine(e.embed(q.target), e.embed(l));
      if (s > best) {
        best = s;
        best_label = l;
      }
    }
    if (best <= 1e-6) continue;
    ++checked;
    const auto out = classify_target(q, v, e, best);
    if (!std::holds_alternative<Related>(out) || std::get<Related>(out).label != best_label) {
      fails.push_back("argmax " + q.target);
      break;
    }
  }
  std::string detail = std::to_string(checked) + " argmax cases";
  for (const auto &f : fails) detail += "; " + f;
  return {fails.empty() && checked > 50, detail};
}

// Session constants

Session scanning(const Config &config) {
  Session s = new_session(office(), pose_at(0.3, 0.3, 30), config).first;
  handle_event(s, event::Utterance{"Find office chair"});
  handle_event(s, event::ButtonA{});
  return s;
}

std::size_t init_beeps(const Step &step) {
  std::size_t n = 0;
  for (const auto &e : step.effects) {
    if (const auto *ec = std::get_if<effect::Earcon>(&e); ec && ec->kind == EarconKind::InitBeep) ++n;
  }
  return n;
}

Outcome state_machine_constants() {
  std::vector<std::string> fails;
  const Config defaults;
  if (defaults.confidence_threshold != 0.3 || defaults.scan_timeout_s != 45 || defaults.beep_hz != 3) {
    fails.push_back("defaults");
  }

  Session s = scanning(defaults);
  handle_event(s, event::FramePose{pose_at(0.3, 0.3, 200)});
  tick(s, 44.999999);
  const bool early = tag_of(s.state) == StateTag::TimedOut;
  tick(s, 0.000001);
  if (early || tag_of(s.state) != StateTag::TimedOut) fails.push_back("timeout not at 45 s");

  const CameraPose p = pose_at(0.3, 0.3, 35.3);
  const double conf = synth_detect(*office(), p, Vocabulary({"office chair"}), 0).at(0).confidence;
  Config at = defaults, under = defaults;
  at.confidence_threshold = conf;
  under.confidence_threshold = std::nextafter(conf, 0.0);
  Session a = scanning(at), b = scanning(under);
  handle_event(a, event::FramePose{p});
  handle_event(b, event::FramePose{p});
  if (tag_of(a.state) != StateTag::Scanning || tag_of(b.state) != StateTag::Announcing) fails.push_back("gate boundary");
  Session g = scanning(defaults);
  handle_event(g, event::FramePose{pose_at(0.3, 0.3, 70)}); // 0.150
  if (tag_of(g.state) != StateTag::Scanning) fails.push_back("gate at 0.3");

  std::mt19937_64 rng(505);
  std::uniform_int_distribution<std::int64_t> total(1, 3'000'000), piece(1, 600'000);
  int beep_fail = 0;
  for (int trial = 0; trial < 500; ++trial) {
    Session r = new_session(office(), pose_at(0.3, 0.3, 30), defaults).first;
    handle_event(r, event::Utterance{"Find a teapot"});
    handle_event(r, event::ButtonA{});
    const std::int64_t T = total(rng);
    std::int64_t elapsed = 0;
    std::size_t beeps = 0;
    while (elapsed < T) {
      const std::int64_t d = std::min(piece(rng), T - elapsed);
      beeps += init_beeps(tick(r, d / 1e6));
      elapsed += d;
    }
    if (beeps != static_cast<std::size_t>(std::llround(3.0 * T / 1e6))) ++beep_fail;
  }
  if (beep_fail) fails.push_back(std::to_string(beep_fail) + " beep counts off");

  const auto stats = fuzz_sessions(office(), kFuzzSequences, kFuzzLength, 606);
  if (stats.violations) fails.push_back(std::to_string(stats.violations) + " illegal: " + stats.first_violation);
  std::string detail = std::to_string(stats.events) + " fuzzed events, " + std::to_string(stats.keyframes) + " captures";
  for (const auto &f : fails) detail += "; " + f;
  return {fails.empty(), detail};
}

// Golden episode

Outcome golden_episode() {
  const auto script = load_script_file(fixture("scripts/office_walkthrough.json"));
  const auto backend = std::make_shared<MockFeedbackBackend>();
  const auto a = run_script(office(), script, Config{}, backend);
  const auto b = run_script(office(), script, Config{}, backend);
  std::string detail;
  bool ok = true;
  for (const auto &c : check_golden(a)) {
    detail += (detail.empty() ? "" : ", ") + c.name + (c.ok ? " ok" : " FAILED");
    ok = ok && c.ok;
  }
  const auto text = transcript_to_jsonl(a);
  const bool stable = text == transcript_to_jsonl(b) && text == read_file(fixture("golden/office_walkthrough.jsonl"));
  detail += stable ? ", byte-stable" : ", NOT byte-stable";
  return {ok && stable, detail};
}

// Prompt fidelity

Outcome prompt_fidelity() {
  std::map<std::string, std::string> pinned;
  std::istringstream sums(read_file(fixture("prompts/SHA256SUMS")));
  std::string hash, name;
  while (sums >> hash >> name) pinned[name] = hash;
  const auto &t = PromptTemplate::builtin();
  const std::pair<const char *, const std::string *> files[] = {
      {"system.txt", &t.system}, {"route_planning.txt", &t.route_planning}, {"scene_description.txt", &t.scene_description}};
  int ok = 0;
  for (const auto &[file, text] : files) {
    ok += pinned.count(file) && sha256_hex(*text) == pinned[file] && read_file(fixture(std::string("prompts/") + file)) == *text;
  }
  const bool anchors = t.system.rfind("You are an AI visual assistant", 0) == 0 &&
                       t.route_planning.find("guide me on how to approach this") != std::string::npos &&
                       t.scene_description.find("provide the positional relationship between the items") != std::string::npos;
  return {ok == 3 && anchors, fmt("%.0f/3 hashes match", ok) + (anchors ? ", anchors present" : ", anchors missing")};
}

// Protocol and replay

Outcome protocol_and_replay() {
  const bool round_trip = protocol_round_trips();
  const auto golden = transcript_from_jsonl(read_file(fixture("golden/office_walkthrough.jsonl")));
  const auto mismatch = verify_replay(office(), golden);

  // Random live sessions replay too, reinitialization and deferrals included.
  std::mt19937_64 rng(707);
  int replay_fail = 0;
  for (int n = 0; n < 50; ++n) {
    Runner r(office(), pose_at(0.3, 0.3, 30), Config{}, std::make_shared<MockFeedbackBackend>());
    for (int i = 0; i < 40; ++i) r.submit(fuzz_event(r.session(), rng));
    if (verify_replay(office(), transcript_from_jsonl(transcript_to_jsonl(r.transcript())))) ++replay_fail;
  }
  std::string detail = round_trip ? "all variants round-trip" : "round trip FAILED";
  detail += mismatch ? ", golden mismatch at record " + std::to_string(mismatch->index) + ": " + mismatch->detail
                     : ", golden replays";
  detail += fmt(", %.0f/50 random transcripts fail replay", replay_fail);
  return {round_trip && !mismatch && replay_fail == 0, detail};
}

} // namespace

int main() {
  const std::pair<const char *, std::function<Outcome()>> criteria[] = {
      {"masked mean depth exactness", masked_mean_exactness},
      {"clock direction equivalence and range", clock_equivalence},
      {"ground-truth recovery", ground_truth_recovery},
      {"matching thresholds", matching_thresholds},
      {"state-machine constants", state_machine_constants},
      {"golden office episode", golden_episode},
      {"prompt fidelity", prompt_fidelity},
      {"protocol and replay", protocol_and_replay},
  };
  int failures = 0;
  for (const auto &[name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception &e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.ok;
    std::printf("%s %s: %s\n", o.ok ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
