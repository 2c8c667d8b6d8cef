#include "objsearch/session.hpp"

#include "objsearch/codec.hpp"
#include "objsearch/error.hpp"

#include <algorithm>
#include <cmath>

namespace objsearch {

namespace {

template <class... Ts> struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::string_view kReady = "Ready. Say find and the name of an object.";
constexpr std::string_view kMalformedTarget =
    "Sorry, I did not catch the target. Say find and the name of an object.";
constexpr std::string_view kTargetFailed = "Sorry, I could not process that target. Please try again.";
constexpr std::string_view kRespecify = "Please say the target again.";
constexpr std::string_view kReinitializing = "Updating the object list, please wait.";
constexpr std::string_view kBranchOptions = "Press A for navigation, or B for scene perception.";
constexpr std::string_view kPerceptionOptions =
    "Press A for a scene description, or B to ask a question.";
constexpr std::string_view kAskQuestion = "Ask your question.";
constexpr std::string_view kContinueSearch = "Continuing the search.";
constexpr std::string_view kSearchCancelled = "Search cancelled. Say find and the name of an object.";
constexpr std::string_view kFeedbackFailed = "Sorry, I could not get an answer. Please try again.";

effect::Speak speak(std::string_view text) { return {std::string(text)}; }
effect::Log log(Json record) { return {std::move(record)}; }

std::string confirmation(std::string_view echo) {
  return "You want to find " + std::string(echo) + ", please confirm.";
}

std::string timeout_offer(std::string_view wording) {
  return "I could not find the " + std::string(wording) +
         ". Press A for a scene description, or B to specify a new target.";
}

Json vocab_json(const Vocabulary &v) { return Json(v.labels()); }

} // namespace

std::int64_t seconds_to_us(double s) { return std::llround(s * 1e6); }

// ---- config ---------------------------------------------------------------

std::string_view to_string(DistanceMode mode) {
  return mode == DistanceMode::Slant ? "slant" : "horizontal";
}

void validate(const Config &c) {
  const auto positive = [](double v, const char *name) {
    if (!(v > 0) || !std::isfinite(v)) {
      throw InvariantError(std::string("config.") + name + " must be positive");
    }
  };
  const auto unit = [](double v, const char *name) {
    if (!(v > 0 && v <= 1)) throw InvariantError(std::string("config.") + name + " must lie in (0, 1]");
  };
  unit(c.confidence_threshold, "confidence_threshold");
  unit(c.similarity_threshold, "similarity_threshold");
  positive(c.scan_timeout_s, "scan_timeout_s");
  positive(c.beep_hz, "beep_hz");
  positive(c.step_length_m, "step_length_m");
  positive(c.max_range_m, "max_range_m");
  positive(c.reinit_duration_s, "reinit_duration_s");
  positive(c.mask_tau_m, "mask_tau_m");
  if (!(c.confidence_noise >= 0 && c.confidence_noise < 1)) {
    throw InvariantError("config.confidence_noise must lie in [0, 1)");
  }
}

Config config_from_json(const Json &j, const Config &base) {
  namespace jf = json_field;
  if (!j.is_object()) throw ParseError("config: expected an object");
  Config c = base;
  for (const auto &[key, value] : j.items()) {
    const std::string path = "config";
    if (key == "confidence_threshold") c.confidence_threshold = jf::number(j, key, path);
    else if (key == "similarity_threshold") c.similarity_threshold = jf::number(j, key, path);
    else if (key == "scan_timeout_s") c.scan_timeout_s = jf::number(j, key, path);
    else if (key == "beep_hz") c.beep_hz = jf::number(j, key, path);
    else if (key == "step_length_m") c.step_length_m = jf::number(j, key, path);
    else if (key == "max_range_m") c.max_range_m = jf::number(j, key, path);
    else if (key == "reinit_duration_s") c.reinit_duration_s = jf::number(j, key, path);
    else if (key == "mask_tau_m") c.mask_tau_m = jf::number(j, key, path);
    else if (key == "confidence_noise") c.confidence_noise = jf::number(j, key, path);
    else if (key == "announce_steps_when_near") c.announce_steps_when_near = jf::boolean_or(j, key, false, path);
    else if (key == "detector_seed") {
      if (!value.is_number_unsigned()) throw ParseError("config.detector_seed: expected a non-negative integer");
      c.detector_seed = value.get<std::uint64_t>();
    } else if (key == "distance_mode") {
      const std::string mode = jf::string(j, key, path);
      if (mode == "slant") c.distance_mode = DistanceMode::Slant;
      else if (mode == "horizontal") c.distance_mode = DistanceMode::Horizontal;
      else throw ParseError("config.distance_mode: expected slant or horizontal");
    } else {
      throw ParseError("config: unknown key '" + key + "'");
    }
  }
  return c;
}

Json config_to_json(const Config &c) {
  return Json{{"confidence_threshold", c.confidence_threshold},
              {"similarity_threshold", c.similarity_threshold},
              {"scan_timeout_s", c.scan_timeout_s},
              {"beep_hz", c.beep_hz},
              {"step_length_m", c.step_length_m},
              {"distance_mode", to_string(c.distance_mode)},
              {"max_range_m", c.max_range_m},
              {"reinit_duration_s", c.reinit_duration_s},
              {"mask_tau_m", c.mask_tau_m},
              {"detector_seed", c.detector_seed},
              {"confidence_noise", c.confidence_noise},
              {"announce_steps_when_near", c.announce_steps_when_near}};
}

// ---- events ---------------------------------------------------------------

std::string_view event_tag(const Event &e) {
  return std::visit(overloaded{
                        [](const event::Tick &) { return std::string_view("tick"); },
                        [](const event::FramePose &) { return std::string_view("frame_pose"); },
                        [](const event::Utterance &) { return std::string_view("utterance"); },
                        [](const event::ButtonA &) { return std::string_view("button_a"); },
                        [](const event::ButtonB &) { return std::string_view("button_b"); },
                        [](const event::Question &) { return std::string_view("question"); },
                        [](const event::FeedbackResult &) { return std::string_view("feedback_result"); },
                    },
                    e);
}

Json event_to_json(const Event &e) {
  Json j{{"type", event_tag(e)}};
  std::visit(overloaded{
                 [&](const event::Tick &t) { j["dt_s"] = t.dt_s; },
                 [&](const event::FramePose &f) { j["pose"] = pose_to_json(f.pose); },
                 [&](const event::Utterance &u) { j["text"] = u.text; },
                 [](const event::ButtonA &) {},
                 [](const event::ButtonB &) {},
                 [&](const event::Question &q) { j["text"] = q.text; },
                 [&](const event::FeedbackResult &r) {
                   j["request_id"] = r.request_id;
                   j["text"] = r.text;
                   j["ok"] = r.ok;
                 },
             },
             e);
  return j;
}

Event event_from_json(const Json &j, const CameraPose &current) {
  namespace jf = json_field;
  if (!j.is_object()) throw ParseError("event: expected an object");
  const std::string type = jf::string(j, "type", "event");
  if (type == "tick") return event::Tick{jf::number(j, "dt_s", "event")};
  if (type == "frame_pose") {
    return event::FramePose{pose_from_json(jf::object(j, "pose", "event"), current, "event.pose")};
  }
  if (type == "utterance") return event::Utterance{jf::string(j, "text", "event")};
  if (type == "button_a") return event::ButtonA{};
  if (type == "button_b") return event::ButtonB{};
  if (type == "question") return event::Question{jf::string(j, "text", "event")};
  if (type == "feedback_result") {
    return event::FeedbackResult{jf::string(j, "request_id", "event"), jf::string(j, "text", "event"),
                                 jf::boolean_or(j, "ok", true, "event")};
  }
  throw ParseError("event: unknown type '" + type + "'");
}

// ---- effects --------------------------------------------------------------

std::string_view to_string(EarconKind kind) {
  switch (kind) {
  case EarconKind::StartScan: return "start_scan";
  case EarconKind::FoundPause: return "found_pause";
  case EarconKind::InitBeep: return "init_beep";
  }
  return "unknown";
}

EarconKind earcon_from_string(std::string_view s) {
  if (s == "start_scan") return EarconKind::StartScan;
  if (s == "found_pause") return EarconKind::FoundPause;
  if (s == "init_beep") return EarconKind::InitBeep;
  throw ParseError("unknown earcon '" + std::string(s) + "'");
}

Json effect_to_json(const Effect &e) {
  return std::visit(
      overloaded{
          [](const effect::Speak &s) { return Json{{"type", "speak"}, {"text", s.text}}; },
          [](const effect::Earcon &x) { return Json{{"type", "earcon"}, {"kind", to_string(x.kind)}}; },
          [](const effect::ReinitDetector &r) {
            return Json{{"type", "reinit_detector"}, {"vocab", vocab_json(r.vocab)}};
          },
          [](const effect::QueryFeedback &q) {
            Json history = Json::array();
            for (const auto &[question, answer] : q.request.history) history.push_back({question, answer});
            return Json{{"type", "query_feedback"},
                        {"request_id", q.request_id},
                        {"kind", to_string(q.kind)},
                        {"system", q.request.system_prompt},
                        {"user", q.request.user_prompt},
                        {"keyframe_ref", q.request.keyframe_ref},
                        {"history", history},
                        {"target", q.target},
                        {"question", q.question},
                        {"pose", pose_to_json(q.pose)}};
          },
          [](const effect::Log &l) { return Json{{"type", "log"}, {"record", l.record}}; },
      },
      e);
}

Effect effect_from_json(const Json &j) {
  namespace jf = json_field;
  if (!j.is_object()) throw ParseError("effect: expected an object");
  const std::string type = jf::string(j, "type", "effect");
  if (type == "speak") return effect::Speak{jf::string(j, "text", "effect")};
  if (type == "earcon") return effect::Earcon{earcon_from_string(jf::string(j, "kind", "effect"))};
  if (type == "reinit_detector") {
    std::vector<std::string> labels;
    for (const auto &l : jf::array(j, "vocab", "effect")) {
      if (!l.is_string()) throw ParseError("effect.vocab: expected strings");
      labels.push_back(l.get<std::string>());
    }
    return effect::ReinitDetector{Vocabulary(std::move(labels))};
  }
  if (type == "query_feedback") {
    effect::QueryFeedback q;
    q.request_id = jf::string(j, "request_id", "effect");
    q.kind = feedback_kind_from_string(jf::string(j, "kind", "effect"));
    q.request.system_prompt = jf::string(j, "system", "effect");
    q.request.user_prompt = jf::string(j, "user", "effect");
    q.request.keyframe_ref = jf::string(j, "keyframe_ref", "effect");
    for (const auto &turn : jf::array(j, "history", "effect")) {
      if (!turn.is_array() || turn.size() != 2 || !turn[0].is_string() || !turn[1].is_string()) {
        throw ParseError("effect.history: expected [question, answer] pairs");
      }
      q.request.history.emplace_back(turn[0].get<std::string>(), turn[1].get<std::string>());
    }
    q.target = jf::string(j, "target", "effect");
    q.question = jf::string(j, "question", "effect");
    q.pose = pose_from_json(jf::object(j, "pose", "effect"), {}, "effect.pose");
    return q;
  }
  if (type == "log") {
    if (!j.contains("record")) throw ParseError("effect: missing 'record'");
    return effect::Log{j.at("record")};
  }
  throw ParseError("effect: unknown type '" + type + "'");
}

// ---- states ---------------------------------------------------------------

std::string_view to_string(StateTag tag) {
  switch (tag) {
  case StateTag::Initializing: return "initializing";
  case StateTag::AwaitTarget: return "await_target";
  case StateTag::ConfirmTarget: return "confirm_target";
  case StateTag::Reinitializing: return "reinitializing";
  case StateTag::Scanning: return "scanning";
  case StateTag::Announcing: return "announcing";
  case StateTag::BranchSelect: return "branch_select";
  case StateTag::Navigating: return "navigating";
  case StateTag::Perceiving: return "perceiving";
  case StateTag::OpenDialogue: return "open_dialogue";
  case StateTag::TimedOut: return "timed_out";
  }
  return "unknown";
}

StateTag state_tag_from_string(std::string_view s) {
  for (auto tag : kAllStateTags) {
    if (to_string(tag) == s) return tag;
  }
  throw ParseError("unknown state '" + std::string(s) + "'");
}

StateTag tag_of(const SessionState &s) { return kAllStateTags[s.index()]; }

// ---- legality table -------------------------------------------------------

const std::vector<TransitionRule> &transition_table() {
  static const std::vector<TransitionRule> table = [] {
    using S = StateTag;
    std::vector<TransitionRule> t;
    constexpr std::string_view kEvents[] = {"tick",     "frame_pose", "utterance", "find",
                                            "button_a", "button_b",   "question",  "feedback_result"};
    for (auto s : kAllStateTags) {
      for (auto e : kEvents) t.push_back({s, e, s});
      t.push_back({s, "find", S::ConfirmTarget});
    }
    const TransitionRule rows[] = {
        {S::Initializing, "init", S::AwaitTarget},
        {S::AwaitTarget, "utterance", S::ConfirmTarget},
        {S::ConfirmTarget, "button_a", S::Scanning},
        {S::ConfirmTarget, "button_a", S::Reinitializing},
        {S::ConfirmTarget, "button_b", S::AwaitTarget},
        {S::Reinitializing, "tick", S::Scanning},
        {S::Reinitializing, "tick", S::TimedOut},
        {S::Scanning, "tick", S::TimedOut},
        {S::Scanning, "frame_pose", S::Announcing},
        {S::Scanning, "button_b", S::AwaitTarget},
        {S::Announcing, "button_a", S::BranchSelect},
        {S::Announcing, "button_b", S::Scanning},
        {S::BranchSelect, "button_a", S::Navigating},
        {S::BranchSelect, "button_b", S::Perceiving},
        {S::Perceiving, "button_b", S::OpenDialogue},
        {S::OpenDialogue, "button_b", S::Perceiving},
        {S::TimedOut, "button_b", S::AwaitTarget},
    };
    t.insert(t.end(), std::begin(rows), std::end(rows));
    return t;
  }();
  return table;
}

bool is_legal_transition(StateTag from, std::string_view event, StateTag to) {
  const auto &t = transition_table();
  return std::find(t.begin(), t.end(), TransitionRule{from, event, to}) != t.end();
}

std::string transition_event_name(const Event &e) {
  if (const auto *u = std::get_if<event::Utterance>(&e); u && is_find_command(u->text)) return "find";
  return std::string(event_tag(e));
}

// ---- transitions ----------------------------------------------------------

namespace {

struct Machine {
  Session &s;
  Step step;

  void emit(Effect e) { step.effects.push_back(std::move(e)); }

  void ignore(std::string_view event, std::string_view reason) {
    emit(log(Json{{"kind", "ignored"},
                  {"state", to_string(tag_of(s.state))},
                  {"event", event},
                  {"reason", reason}}));
  }

  void enter_scanning(std::int64_t entered_us) {
    s.state = state::Scanning{entered_us, entered_us + seconds_to_us(s.config.scan_timeout_s)};
    emit(effect::Earcon{EarconKind::StartScan});
    emit(log(Json{{"kind", "scan_started"}, {"label", s.target_label}, {"wording", s.target_wording}}));
  }

  void time_out() {
    s.state = state::TimedOut{};
    emit(speak(timeout_offer(s.target_wording)));
    emit(log(Json{{"kind", "scan_timeout"}, {"label", s.target_label}}));
  }

  void query(FeedbackKind kind, KeyFramePtr keyframe, std::string question = {},
             std::vector<DialogueTurn> history = {}) {
    effect::QueryFeedback q;
    q.request_id = "q" + std::to_string(++s.query_count);
    q.kind = kind;
    q.request.system_prompt = PromptTemplate::builtin().system;
    switch (kind) {
    case FeedbackKind::RoutePlan: q.request.user_prompt = build_route_prompt(s.target_wording); break;
    case FeedbackKind::SceneDescription: q.request.user_prompt = build_scene_prompt(); break;
    case FeedbackKind::Answer: q.request.user_prompt = question; break;
    }
    if (keyframe && !s.keyframe_consumed) {
      q.request.keyframe_ref = keyframe->id;
      q.pose = keyframe->pose;
      s.keyframe_consumed = true;
    } else {
      q.request.keyframe_ref = "live:" + std::to_string(++s.live_frame_count);
      q.pose = s.pose;
    }
    q.request.history = std::move(history);
    q.target = s.target_wording;
    q.question = question;
    q.keyframe = std::move(keyframe);
    s.pending[q.request_id] = PendingQuery{kind, q.question};
    emit(std::move(q));
  }

  void specify_target(const std::string &text) {
    TargetQuery tq;
    try {
      tq = normalize_query(text);
    } catch (const PreconditionError &) {
      emit(speak(kMalformedTarget));
      emit(log(Json{{"kind", "malformed_target"}, {"utterance", text}}));
      return;
    }
    MatchOutcome outcome = Unrelated{};
    if (!s.vocab.empty()) {
      try {
        outcome = classify_target(tq, s.vocab, *s.embedder, s.config.similarity_threshold);
      } catch (const ProviderError &e) {
        emit(speak(kTargetFailed));
        emit(log(Json{{"kind", "provider_error"}, {"subject", e.subject()}, {"detail", e.what()}}));
        return;
      }
    }
    Json record{{"kind", "classified"}, {"wording", tq.target}, {"outcome", outcome_kind(outcome)}};
    if (const auto *m = std::get_if<Match>(&outcome)) {
      record["label"] = m->label;
      s.target_wording = m->label;
      s.target_label = m->label;
    } else if (const auto *r = std::get_if<Related>(&outcome)) {
      record["label"] = r->label;
      record["score"] = r->score;
      s.target_wording = tq.target;
      s.target_label = r->label;
    } else {
      s.target_wording = tq.target;
      s.target_label = tq.target;
    }
    s.pending.clear();
    s.state = state::ConfirmTarget{tq, outcome};
    emit(speak(confirmation(s.target_wording)));
    emit(log(std::move(record)));
  }

  bool accept_pose(const CameraPose &pose) {
    try {
      validate(pose);
    } catch (const InvariantError &e) {
      emit(log(Json{{"kind", "pose_rejected"}, {"reason", e.what()}}));
      return false;
    }
    if (!pose_inside(s.scene->bounds, pose)) {
      emit(log(Json{{"kind", "pose_rejected"}, {"reason", "outside scene bounds"}}));
      return false;
    }
    s.pose = pose;
    return true;
  }

  void scan_frame() {
    DetectionOptions opts;
    opts.max_range = s.config.max_range_m;
    opts.confidence_noise = s.config.confidence_noise;
    const auto detections = synth_detect(*s.scene, s.pose, s.vocab, s.config.detector_seed, opts);
    const std::string label = fold_case(s.target_label);
    const auto it = std::find_if(detections.begin(), detections.end(),
                                 [&](const GroundTruthDetection &d) { return fold_case(d.label) == label; });
    if (it == detections.end()) return;
    if (!(it->confidence > s.config.confidence_threshold)) {
      emit(log(Json{{"kind", "below_threshold"}, {"label", it->label}, {"confidence", it->confidence}}));
      return;
    }
    auto kf = std::make_shared<KeyFrame>();
    kf->id = "kf" + std::to_string(++s.keyframe_count);
    kf->depth = render_depth(*s.scene, s.pose, s.config.max_range_m);
    kf->bbox = it->bbox;
    kf->mask = mask_from_bbox(kf->bbox, kf->depth, s.config.mask_tau_m);
    kf->pose = s.pose;
    kf->target_label = s.target_label;
    kf->captured_at = s.now_s();
    Localization loc = localize(*kf, s.config.distance_mode);
    loc.label = s.target_wording;
    AnnounceOptions ao;
    ao.steps_when_near = s.config.announce_steps_when_near;
    ao.step_length_m = s.config.step_length_m;

    s.keyframe_consumed = false;
    emit(effect::Earcon{EarconKind::FoundPause});
    emit(speak(announce(loc, ao)));
    emit(log(Json{{"kind", "keyframe"},
                  {"object_id", it->object_id},
                  {"confidence", it->confidence},
                  {"localization", localization_to_json(loc)},
                  {"keyframe", keyframe_to_json(*kf)}}));
    s.state = state::Announcing{std::move(kf), loc};
  }

  void on_tick(double dt_s) {
    const std::int64_t dt = seconds_to_us(dt_s);
    if (!(dt_s > 0) || !std::isfinite(dt_s) || dt <= 0) {
      ignore("tick", "dt must be positive");
      return;
    }
    const std::int64_t before = s.now_us;
    s.now_us += dt;
    if (auto *r = std::get_if<state::Reinitializing>(&s.state)) {
      const std::int64_t duration = seconds_to_us(s.config.reinit_duration_s);
      const std::int64_t elapsed = std::min(r->elapsed_us + dt, duration);
      const auto due = static_cast<std::int64_t>(
          std::floor(s.config.beep_hz * static_cast<double>(elapsed) / 1e6 + 0.5));
      for (; r->beeps < due; ++r->beeps) emit(effect::Earcon{EarconKind::InitBeep});
      if (r->elapsed_us + dt < duration) {
        r->elapsed_us = elapsed;
        return;
      }
      const std::int64_t done_at = before + (duration - r->elapsed_us);
      emit(log(Json{{"kind", "reinit_complete"}, {"label", s.target_label}}));
      enter_scanning(done_at);
    }
    if (const auto *sc = std::get_if<state::Scanning>(&s.state); sc && s.now_us >= sc->deadline_us) {
      time_out();
    }
  }

  void on_utterance(const std::string &text) {
    if (is_find_command(text) || std::holds_alternative<state::AwaitTarget>(s.state)) {
      specify_target(text);
    } else if (auto *d = std::get_if<state::OpenDialogue>(&s.state)) {
      ask(*d, text);
    } else {
      ignore("utterance", "not a find command");
    }
  }

  void ask(state::OpenDialogue &d, const std::string &text) {
    if (trim(text).empty()) {
      ignore("question", "empty question");
      return;
    }
    query(FeedbackKind::Answer, d.keyframe, trim(text), d.history);
  }

  void on_button_a() {
    std::visit(
        overloaded{
            [&](state::ConfirmTarget &c) {
              if (const auto *m = std::get_if<Match>(&c.outcome)) {
                s.target_label = m->label;
                enter_scanning(s.now_us);
              } else if (const auto *r = std::get_if<Related>(&c.outcome)) {
                s.target_label = r->label;
                enter_scanning(s.now_us);
              } else {
                s.vocab = extend_vocab(s.vocab, c.query.target);
                s.target_label = c.query.target;
                ++s.reinit_count;
                s.state = state::Reinitializing{c.query.target, 0, 0};
                emit(effect::ReinitDetector{s.vocab});
                emit(speak(kReinitializing));
              }
            },
            [&](state::Announcing &a) {
              s.state = state::BranchSelect{a.keyframe};
              emit(speak(kBranchOptions));
            },
            [&](state::BranchSelect &b) {
              KeyFramePtr kf = b.keyframe;
              s.state = state::Navigating{kf};
              query(FeedbackKind::RoutePlan, kf);
            },
            [&](state::Navigating &n) { query(FeedbackKind::RoutePlan, n.keyframe); },
            [&](state::Perceiving &p) { query(FeedbackKind::SceneDescription, p.keyframe); },
            [&](state::TimedOut &) { query(FeedbackKind::SceneDescription, nullptr); },
            [&](auto &) { ignore("button_a", "no action in this state"); },
        },
        s.state);
  }

  void on_button_b() {
    std::visit(overloaded{
                   [&](state::ConfirmTarget &) {
                     s.state = state::AwaitTarget{};
                     emit(speak(kRespecify));
                   },
                   [&](state::Scanning &) {
                     s.state = state::AwaitTarget{};
                     emit(speak(kSearchCancelled));
                   },
                   [&](state::Announcing &) {
                     enter_scanning(s.now_us);
                     emit(speak(kContinueSearch));
                   },
                   [&](state::BranchSelect &b) {
                     s.state = state::Perceiving{b.keyframe};
                     emit(speak(kPerceptionOptions));
                   },
                   [&](state::Navigating &n) { query(FeedbackKind::SceneDescription, n.keyframe); },
                   [&](state::Perceiving &p) {
                     s.state = state::OpenDialogue{p.keyframe, {}};
                     emit(speak(kAskQuestion));
                   },
                   [&](state::OpenDialogue &d) {
                     s.state = state::Perceiving{d.keyframe};
                     emit(speak(kPerceptionOptions));
                   },
                   [&](state::TimedOut &) {
                     s.state = state::AwaitTarget{};
                     emit(speak(kRespecify));
                   },
                   [&](auto &) { ignore("button_b", "no action in this state"); },
               },
               s.state);
  }

  void on_feedback(const event::FeedbackResult &r) {
    const auto it = s.pending.find(r.request_id);
    if (it == s.pending.end()) {
      ignore("feedback_result", "unknown or stale request id");
      return;
    }
    const PendingQuery pending = it->second;
    s.pending.erase(it);
    if (!r.ok) {
      emit(speak(kFeedbackFailed));
      emit(log(Json{{"kind", "feedback_failed"}, {"request_id", r.request_id}, {"detail", r.text}}));
      return;
    }
    std::string text = r.text;
    if (pending.kind == FeedbackKind::RoutePlan && !text.starts_with(prompts::kAlignmentReminder)) {
      text = std::string(prompts::kAlignmentReminder) + " " + text;
    }
    if (pending.kind == FeedbackKind::Answer) {
      if (auto *d = std::get_if<state::OpenDialogue>(&s.state)) d->history.emplace_back(pending.question, text);
    }
    emit(speak(text));
  }

  void dispatch(const Event &e) {
    if (std::holds_alternative<state::Reinitializing>(s.state) &&
        !std::holds_alternative<event::Tick>(e) && transition_event_name(e) != "find") {
      step.deferred = true;
      emit(log(Json{{"kind", "deferred"}, {"event", event_tag(e)}}));
      return;
    }
    std::visit(overloaded{
                   [&](const event::Tick &t) { on_tick(t.dt_s); },
                   [&](const event::FramePose &f) {
                     if (accept_pose(f.pose) && std::holds_alternative<state::Scanning>(s.state)) {
                       scan_frame();
                     }
                   },
                   [&](const event::Utterance &u) { on_utterance(u.text); },
                   [&](const event::ButtonA &) { on_button_a(); },
                   [&](const event::ButtonB &) { on_button_b(); },
                   [&](const event::Question &q) {
                     if (auto *d = std::get_if<state::OpenDialogue>(&s.state)) {
                       ask(*d, q.text);
                     } else {
                       ignore("question", "questions are taken in open dialogue only");
                     }
                   },
                   [&](const event::FeedbackResult &r) { on_feedback(r); },
               },
               e);
  }
};

} // namespace

std::pair<Session, Step> new_session(ScenePtr scene, const CameraPose &start_pose, const Config &config,
                                     std::shared_ptr<const EmbeddingProvider> embedder) {
  if (!scene) throw PreconditionError("new_session: no scene");
  validate(config);
  validate(start_pose);
  if (!pose_inside(scene->bounds, start_pose)) throw PreconditionError("new_session: start pose outside scene bounds");

  Session s;
  s.scene = std::move(scene);
  s.config = config;
  s.embedder = embedder ? std::move(embedder) : std::make_shared<TrigramEmbedder>();
  s.state = state::Initializing{};
  s.pose = start_pose;

  Step step;
  s.vocab = Vocabulary(list_visible_labels(*s.scene, s.pose));
  step.effects.push_back(log(Json{{"kind", "scenario_capture"},
                                  {"scene", s.scene->name},
                                  {"pose", pose_to_json(s.pose)},
                                  {"vocab", vocab_json(s.vocab)},
                                  {"empty_vocab", s.vocab.empty()}}));
  step.effects.push_back(effect::ReinitDetector{s.vocab});
  step.effects.push_back(speak(kReady));
  s.state = state::AwaitTarget{};
  return {std::move(s), std::move(step)};
}

Step handle_event(Session &session, const Event &event) {
  Machine m{session, {}};
  m.dispatch(event);
  return std::move(m.step);
}

Step tick(Session &session, double dt_s) { return handle_event(session, event::Tick{dt_s}); }

std::pair<Session, Step> apply_event(Session session, const Event &event) {
  Step step = handle_event(session, event);
  return {std::move(session), std::move(step)};
}

} // namespace objsearch
