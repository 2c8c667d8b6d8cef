#include "objsearch/feedback.hpp"

#include "objsearch/error.hpp"
#include "objsearch/vocab.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

namespace objsearch {

const PromptTemplate &PromptTemplate::builtin() {
  static const PromptTemplate t{std::string(prompts::kSystem),
                                std::string(prompts::kRoutePlanning),
                                std::string(prompts::kSceneDescription)};
  return t;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string build_route_prompt(std::string_view target) {
  if (trim(target).empty()) throw PreconditionError("build_route_prompt: empty target");
  std::string prompt(prompts::kRoutePlanning);
  const auto pos = prompt.find(prompts::kTargetSlot);
  prompt.replace(pos, prompts::kTargetSlot.size(), target);
  return prompt;
}

std::string build_scene_prompt() { return std::string(prompts::kSceneDescription); }

std::string_view to_string(FeedbackKind kind) {
  switch (kind) {
  case FeedbackKind::RoutePlan: return "route_plan";
  case FeedbackKind::SceneDescription: return "scene_description";
  case FeedbackKind::Answer: return "answer";
  }
  return "unknown";
}

FeedbackKind feedback_kind_from_string(std::string_view s) {
  if (s == "route_plan") return FeedbackKind::RoutePlan;
  if (s == "scene_description") return FeedbackKind::SceneDescription;
  if (s == "answer") return FeedbackKind::Answer;
  throw ParseError("unknown feedback kind '" + std::string(s) + "'");
}

int count_words(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

namespace {

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    current += text[i];
    const char c = text[i];
    const bool end = (c == '.' || c == '!' || c == '?') &&
                     (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (end) {
      out.push_back(trim(current));
      current.clear();
    }
  }
  if (!trim(current).empty()) out.push_back(trim(current));
  return out;
}

std::string join_sentences(const std::vector<std::string> &sentences) {
  std::string out;
  for (const auto &s : sentences) {
    if (s.empty()) continue;
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

} // namespace

std::string cap_words(std::string_view text, int limit) {
  std::vector<std::string> kept;
  int words = 0;
  for (auto &s : split_sentences(text)) {
    const int n = count_words(s);
    if (words + n > limit) break;
    words += n;
    kept.push_back(std::move(s));
  }
  return join_sentences(kept);
}

MLLMResponse make_response(std::string text) {
  MLLMResponse r;
  r.text = cap_words(text, 100);
  r.word_count = count_words(r.text);
  return r;
}

std::string number_word(long n) {
  static constexpr std::array<std::string_view, 21> kWords = {
      "zero",    "one",     "two",       "three",    "four",     "five",    "six",
      "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
      "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen", "twenty"};
  if (n >= 0 && n <= 20) return std::string(kWords[static_cast<std::size_t>(n)]);
  return std::to_string(n);
}

std::string_view direction_phrase(ClockHour hour) {
  switch (hour.value()) {
  case 9: return "to your far left";
  case 10: return "to your left";
  case 11: return "slightly to your left";
  case 1: return "slightly to your right";
  case 2: return "to your right";
  case 3: return "to your far right";
  default: return "straight ahead";
  }
}

std::string_view location_phrase(ClockHour hour) {
  return hour.value() == 12 ? std::string_view("in front of you") : direction_phrase(hour);
}

namespace {

struct ViewerFrame {
  Vec2 origin;
  Vec2 forward;
  Vec2 right;

  explicit ViewerFrame(const CameraPose &pose) {
    const double h = pose.heading_deg * std::numbers::pi / 180.0;
    origin = pose.position;
    forward = {std::cos(h), std::sin(h)};
    right = {std::sin(h), -std::cos(h)};
  }
  // (lateral, depth) of a floor point.
  std::pair<double, double> local(Vec2 p) const {
    const double dx = p.x - origin.x, dy = p.y - origin.y;
    return {dx * right.x + dy * right.y, dx * forward.x + dy * forward.y};
  }
};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string with_article(const std::string &label) {
  const char c = label.empty() ? 'x' : static_cast<char>(std::tolower(static_cast<unsigned char>(label[0])));
  const bool vowel = c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
  return (vowel ? "an " : "a ") + label;
}

double footprint_gap(const Rect &a, const Rect &b) {
  const double dx = std::max({0.0, a.x - (b.x + b.w), b.x - (a.x + a.w)});
  const double dy = std::max({0.0, a.y - (b.y + b.h), b.y - (a.y + a.h)});
  return std::hypot(dx, dy);
}

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Entry parameter in [0, 1] of segment a->b into the rectangle, if any.
std::optional<double> segment_entry(Vec2 a, Vec2 b, const Rect &r) {
  double t0 = 0, t1 = 1;
  const double d[2] = {b.x - a.x, b.y - a.y};
  const double o[2] = {a.x, a.y};
  const double lo[2] = {r.x, r.y};
  const double hi[2] = {r.x + r.w, r.y + r.h};
  for (int i = 0; i < 2; ++i) {
    if (d[i] == 0) {
      if (o[i] < lo[i] || o[i] > hi[i]) return std::nullopt;
      continue;
    }
    double s0 = (lo[i] - o[i]) / d[i];
    double s1 = (hi[i] - o[i]) / d[i];
    if (s0 > s1) std::swap(s0, s1);
    t0 = std::max(t0, s0);
    t1 = std::min(t1, s1);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

std::string height_qualifier(const SceneObject &o) {
  if (o.top_height < 0.8) return " at knee level";
  if (o.top_height < 1.2) return " at waist level";
  return "";
}

/// Clock hour of an object seen from `pose`: image-space when it projects
/// into view, floor bearing otherwise. Empty when it lies behind the viewer.
std::optional<ClockHour> object_hour(const Scene &scene, const CameraPose &pose,
                                     const SceneObject &o) {
  if (auto view = project_object(scene, pose, o.id)) {
    return clock_direction(view->bbox, pose.image_width, pose.image_height);
  }
  const auto [lateral, depth] = ViewerFrame(pose).local(o.footprint.center());
  const double bearing = std::atan2(lateral, depth) * 180.0 / std::numbers::pi;
  if (std::abs(bearing) > 90.0) return std::nullopt;
  return hour_from_offset(bearing / 30.0);
}

double iou(const BBox &a, const BBox &b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

const SceneObject *nearest_with_label(const Scene &scene, const CameraPose &pose,
                                      std::string_view label) {
  const std::string folded = fold_case(trim(label));
  const SceneObject *best = nullptr;
  for (const auto &o : scene.objects) {
    if (fold_case(o.label) != folded) continue;
    if (best == nullptr ||
        distance(o.footprint.center(), pose.position) < distance(best->footprint.center(), pose.position)) {
      best = &o;
    }
  }
  return best;
}

bool supports(const Scene &scene, const SceneObject &support, const SceneObject &item) {
  for (const SceneObject *o = &item; o->on_top_of;) {
    o = scene.find(*o->on_top_of);
    if (o == nullptr) return false;
    if (o->id == support.id) return true;
  }
  return false;
}

} // namespace

std::string relation(const SceneObject &subject, const SceneObject &reference,
                     const CameraPose &pose) {
  if (subject.on_top_of && *subject.on_top_of == reference.id) return "on top of";
  const ViewerFrame frame(pose);
  const auto [sl, sd] = frame.local(subject.footprint.center());
  const auto [rl, rd] = frame.local(reference.footprint.center());
  const double lateral = sl - rl;
  const double depth = sd - rd;
  if (std::abs(lateral) >= std::abs(depth)) return lateral < 0 ? "to the left of" : "to the right of";
  return depth > 0 ? "behind" : "in front of";
}

const SceneObject *focal_object(const Scene &scene, const KeyFrame &keyframe) {
  const std::string folded = fold_case(keyframe.target_label);
  const SceneObject *best = nullptr;
  double best_iou = -1;
  for (const auto &o : scene.objects) {
    if (fold_case(o.label) != folded) continue;
    const auto view = project_object(scene, keyframe.pose, o.id);
    const double score = view ? iou(view->bbox, keyframe.bbox) : 0.0;
    if (score > best_iou) {
      best_iou = score;
      best = &o;
    }
  }
  if (best != nullptr && best_iou <= 0) {
    return nearest_with_label(scene, keyframe.pose, keyframe.target_label);
  }
  return best;
}

MLLMResponse mock_route_plan(const Scene &scene, const CameraPose &pose, const KeyFrame *keyframe,
                             std::string_view target, double step_length_m) {
  if (!(step_length_m > 0)) throw PreconditionError("step length must be positive");
  const SceneObject *goal = keyframe ? focal_object(scene, *keyframe) : nullptr;
  if (goal == nullptr) goal = nearest_with_label(scene, pose, target);
  if (goal == nullptr) throw PreconditionError("unknown target '" + std::string(target) + "'");
  const std::string name = trim(target).empty() ? goal->label : trim(target);

  std::vector<std::string> sentences{std::string(prompts::kAlignmentReminder)};

  const Vec2 goal_center = goal->footprint.center();
  const double horizontal = distance(pose.position, goal_center);
  const long steps = std::lround(horizontal / step_length_m);

  std::optional<ClockHour> hour;
  if (keyframe != nullptr && keyframe->pose == pose) {
    hour = clock_direction(keyframe->bbox, keyframe->depth.width, keyframe->depth.height);
  } else {
    hour = object_hour(scene, pose, *goal);
  }
  const std::string step_words = number_word(steps) + (steps == 1 ? " step" : " steps");
  if (steps == 0) {
    sentences.push_back("The " + name + " is right in front of you.");
  } else if (!hour) {
    sentences.push_back("Turn around, then walk about " + step_words + ".");
  } else {
    sentences.push_back("Walk about " + step_words + " " + std::string(direction_phrase(*hour)) + ".");
  }

  const SceneObject *obstacle = nullptr;
  double obstacle_at = std::numeric_limits<double>::infinity();
  for (const auto &o : scene.objects) {
    if (o.id == goal->id || o.on_top_of || supports(scene, o, *goal)) continue;
    if (o.footprint.contains(pose.position)) continue;
    if (auto s = segment_entry(pose.position, goal_center, o.footprint); s && *s < obstacle_at) {
      obstacle_at = *s;
      obstacle = &o;
    }
  }
  if (obstacle != nullptr) {
    sentences.push_back("Watch out for the " + obstacle->label + height_qualifier(*obstacle) +
                        " on your way.");
  } else if (goal->on_top_of) {
    const SceneObject &support = scene.at(*goal->on_top_of);
    sentences.push_back("The " + name + " is on top of the " + support.label +
                        height_qualifier(support) + ".");
  } else {
    const SceneObject *landmark = nullptr;
    double best_gap = 1.5;
    for (const auto &o : scene.objects) {
      if (o.id == goal->id || o.on_top_of) continue;
      const double gap = footprint_gap(o.footprint, goal->footprint);
      if (gap <= best_gap) {
        best_gap = gap;
        landmark = &o;
      }
    }
    if (landmark != nullptr) {
      const std::string height = height_qualifier(*landmark);
      sentences.push_back("The " + name + " is next to the " + landmark->label +
                          (height.empty() ? "" : ", which is" + height) + ".");
    }
  }
  return make_response(join_sentences(sentences));
}

MLLMResponse mock_scene_description(const Scene &scene, const CameraPose &pose,
                                    const KeyFrame *keyframe) {
  struct Seen {
    const SceneObject *object;
    double area;
  };
  std::vector<Seen> visible;
  for (const auto &o : scene.objects) {
    if (auto view = project_object(scene, pose, o.id)) visible.push_back({&o, view->bbox.area()});
  }
  const auto is_visible = [&](const SceneObject &o) {
    return std::any_of(visible.begin(), visible.end(), [&](const Seen &s) { return s.object == &o; });
  };

  std::vector<std::string> sentences;
  const SceneObject *focal = keyframe ? focal_object(scene, *keyframe) : nullptr;
  if (focal != nullptr) {
    const auto hour = object_hour(scene, pose, *focal);
    sentences.push_back("There is " + with_article(focal->label) + " " +
                        std::string(hour ? location_phrase(*hour) : "behind you") + ".");
    for (const auto &o : scene.objects) {
      if (o.on_top_of && *o.on_top_of == focal->id && is_visible(o)) {
        sentences.push_back(capitalize(with_article(o.label)) + " is on top of the " + focal->label + ".");
      }
    }
    if (focal->on_top_of) {
      const SceneObject &support = scene.at(*focal->on_top_of);
      if (is_visible(support)) {
        sentences.push_back("The " + focal->label + " is on top of the " + support.label + ".");
      }
    }
    std::vector<std::pair<double, const SceneObject *>> near;
    for (const auto &s : visible) {
      const SceneObject &o = *s.object;
      if (&o == focal || (o.on_top_of && *o.on_top_of == focal->id)) continue;
      if (focal->on_top_of && *focal->on_top_of == o.id) continue;
      const double gap = footprint_gap(o.footprint, focal->footprint);
      if (gap <= 1.5) near.emplace_back(gap, &o);
    }
    std::stable_sort(near.begin(), near.end(),
                     [](const auto &a, const auto &b) { return a.first < b.first; });
    for (const auto &[gap, o] : near) {
      sentences.push_back(capitalize(with_article(o->label)) + " is " + relation(*o, *focal, pose) +
                          " the " + focal->label + ".");
    }
  } else {
    std::stable_sort(visible.begin(), visible.end(),
                     [](const Seen &a, const Seen &b) { return a.area > b.area; });
    for (const auto &s : visible) {
      const SceneObject &o = *s.object;
      if (o.on_top_of) {
        sentences.push_back(capitalize(with_article(o.label)) + " is on top of the " +
                            scene.at(*o.on_top_of).label + ".");
      } else {
        const auto hour = object_hour(scene, pose, o);
        sentences.push_back("There is " + with_article(o.label) + " " +
                            std::string(hour ? location_phrase(*hour) : "behind you") + ".");
      }
    }
    if (sentences.empty()) sentences.emplace_back("I do not see any objects from here.");
  }
  return make_response(join_sentences(sentences));
}

namespace {

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string singular(std::string w) {
  if (w.size() > 3 && w.ends_with("s")) w.pop_back();
  return w;
}

bool has_word(const std::vector<std::string> &words, std::string_view w) {
  return std::find(words.begin(), words.end(), w) != words.end();
}

bool has_phrase(std::string_view folded_question, std::string_view phrase) {
  return folded_question.find(phrase) != std::string_view::npos;
}

int label_hits(const SceneObject &o, const std::vector<std::string> &question_words) {
  int hits = 0;
  for (const auto &w : words_of(o.label)) {
    if (w.size() < 3) continue;
    const std::string sw = singular(w);
    for (const auto &q : question_words) {
      if (singular(q) == sw) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

} // namespace

MLLMResponse mock_answer(const Scene &scene, const KeyFrame *keyframe, std::string_view question) {
  if (trim(question).empty()) throw PreconditionError("mock_answer: empty question");
  const std::string folded = fold_case(question);
  const auto qwords = words_of(question);

  std::vector<const SceneObject *> candidates;
  const SceneObject *focal = keyframe ? focal_object(scene, *keyframe) : nullptr;
  if (focal != nullptr) {
    candidates.push_back(focal);
    for (const auto &o : scene.objects) {
      if (o.on_top_of && *o.on_top_of == focal->id) candidates.push_back(&o);
    }
    if (focal->on_top_of) candidates.push_back(&scene.at(*focal->on_top_of));
  } else {
    for (const auto &o : scene.objects) candidates.push_back(&o);
  }

  const SceneObject *subject = nullptr;
  int best_hits = 0;
  for (const auto *c : candidates) {
    const int hits = label_hits(*c, qwords);
    if (hits > best_hits) {
      best_hits = hits;
      subject = c;
    }
  }
  if (subject == nullptr) subject = focal;
  if (subject == nullptr) return make_response(std::string(prompts::kCannotTell));

  if (has_phrase(folded, "what is on") || has_phrase(folded, "what's on")) {
    std::vector<std::string> items;
    for (const auto &o : scene.objects) {
      if (o.on_top_of && *o.on_top_of == subject->id) items.push_back(with_article(o.label));
    }
    if (items.empty()) return make_response("There is nothing on top of the " + subject->label + ".");
    std::string list;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i > 0) list += (i + 1 == items.size()) ? (items.size() > 2 ? ", and " : " and ") : ", ";
      list += items[i];
    }
    return make_response("On the " + subject->label + " there is " + list + ".");
  }

  std::string key;
  if (has_phrase(folded, "how many") || has_word(qwords, "count") || has_phrase(folded, "number of")) {
    key = "count";
  } else if (has_word(qwords, "color") || has_word(qwords, "colour")) {
    key = "color";
  } else if (has_word(qwords, "flavor") || has_word(qwords, "flavour") || has_word(qwords, "taste")) {
    key = "flavor";
  } else if (has_word(qwords, "material") || has_phrase(folded, "made of") ||
             has_phrase(folded, "made from")) {
    key = "material";
  } else {
    for (const auto &[k, v] : subject->attributes) {
      if (has_word(qwords, fold_case(k))) {
        key = k;
        break;
      }
    }
  }
  const auto it = key.empty() ? subject->attributes.end() : subject->attributes.find(key);
  if (it == subject->attributes.end()) return make_response(std::string(prompts::kCannotTell));

  const std::string &value = it->second;
  std::string text;
  if (key == "count") {
    char *end = nullptr;
    const long n = std::strtol(value.c_str(), &end, 10);
    if (end != value.c_str() && *end == '\0') {
      text = capitalize(number_word(n)) + ". I can count " + number_word(n) + " of them.";
    } else {
      text = "There are " + value + ".";
    }
  } else if (key == "color") {
    text = "The " + subject->label + " is " + value + ".";
  } else if (key == "flavor") {
    text = capitalize(value) + "! The " + subject->label + " tastes of " + value + ".";
  } else if (key == "material") {
    text = "The " + subject->label + " is made of " + value + ".";
  } else {
    text = "The " + key + " of the " + subject->label + " is " + value + ".";
  }
  return make_response(text);
}

MLLMResponse MockFeedbackBackend::respond(const FeedbackQuery &query) {
  if (query.scene == nullptr) throw ProviderError(query.request_id, "mock backend: no scene");
  switch (query.kind) {
  case FeedbackKind::RoutePlan:
    return mock_route_plan(*query.scene, query.pose, query.focus, query.target, query.step_length_m);
  case FeedbackKind::SceneDescription:
    return mock_scene_description(*query.scene, query.pose, query.focus);
  case FeedbackKind::Answer:
    return mock_answer(*query.scene, query.focus, query.question);
  }
  throw ProviderError(query.request_id, "mock backend: unknown request kind");
}

} // namespace objsearch
