#pragma once

#include "objsearch/feedback.hpp"
#include "objsearch/json.hpp"
#include "objsearch/localize.hpp"
#include "objsearch/scene.hpp"
#include "objsearch/vocab.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace objsearch {

struct Config {
  double confidence_threshold = 0.3; // detections must exceed this (strict)
  double similarity_threshold = 0.8; // related when at least this
  double scan_timeout_s = 45;
  double beep_hz = 3;
  double step_length_m = 0.7;
  DistanceMode distance_mode = DistanceMode::Slant;
  double max_range_m = 10;
  double reinit_duration_s = 3.0;
  double mask_tau_m = kDefaultMaskTau;
  std::uint64_t detector_seed = 0;
  double confidence_noise = 0;
  bool announce_steps_when_near = false;

  bool operator==(const Config &) const = default;
};

/// Throws InvariantError.
void validate(const Config &config);
/// Unknown keys are rejected; missing keys keep the values of `base`.
Config config_from_json(const Json &j, const Config &base = {});
Json config_to_json(const Config &config);

std::string_view to_string(DistanceMode mode);

// ---- events ---------------------------------------------------------------

namespace event {
struct Tick {
  double dt_s = 0;
  bool operator==(const Tick &) const = default;
};
struct FramePose {
  CameraPose pose;
  bool operator==(const FramePose &) const = default;
};
struct Utterance {
  std::string text;
  bool operator==(const Utterance &) const = default;
};
struct ButtonA {
  bool operator==(const ButtonA &) const = default;
};
struct ButtonB {
  bool operator==(const ButtonB &) const = default;
};
struct Question {
  std::string text;
  bool operator==(const Question &) const = default;
};
/// Answer to an earlier QueryFeedback, delivered by the driver.
struct FeedbackResult {
  std::string request_id;
  std::string text;
  bool ok = true;
  bool operator==(const FeedbackResult &) const = default;
};
} // namespace event

using Event = std::variant<event::Tick, event::FramePose, event::Utterance, event::ButtonA,
                           event::ButtonB, event::Question, event::FeedbackResult>;

std::string_view event_tag(const Event &e);
Json event_to_json(const Event &e);
/// A frame_pose may carry a partial pose; missing keys come from `current`.
Event event_from_json(const Json &j, const CameraPose &current = {});

// ---- effects --------------------------------------------------------------

enum class EarconKind { StartScan, FoundPause, InitBeep };
std::string_view to_string(EarconKind kind);
EarconKind earcon_from_string(std::string_view s);

using KeyFramePtr = std::shared_ptr<const KeyFrame>;

namespace effect {
struct Speak {
  std::string text;
};
struct Earcon {
  EarconKind kind = EarconKind::StartScan;
};
struct ReinitDetector {
  Vocabulary vocab;
};
struct QueryFeedback {
  std::string request_id;
  FeedbackKind kind = FeedbackKind::SceneDescription;
  MLLMRequest request;
  std::string target;
  std::string question;
  CameraPose pose;
  /// Context for the backend; serialized only through request.keyframe_ref.
  KeyFramePtr keyframe;
};
struct Log {
  Json record;
};
} // namespace effect

using Effect = std::variant<effect::Speak, effect::Earcon, effect::ReinitDetector,
                            effect::QueryFeedback, effect::Log>;

Json effect_to_json(const Effect &e);
Effect effect_from_json(const Json &j);

// ---- states ---------------------------------------------------------------

enum class StateTag {
  Initializing,
  AwaitTarget,
  ConfirmTarget,
  Reinitializing,
  Scanning,
  Announcing,
  BranchSelect,
  Navigating,
  Perceiving,
  OpenDialogue,
  TimedOut,
};

inline constexpr StateTag kAllStateTags[] = {
    StateTag::Initializing, StateTag::AwaitTarget, StateTag::ConfirmTarget,
    StateTag::Reinitializing, StateTag::Scanning,  StateTag::Announcing,
    StateTag::BranchSelect, StateTag::Navigating,  StateTag::Perceiving,
    StateTag::OpenDialogue, StateTag::TimedOut};

std::string_view to_string(StateTag tag);
StateTag state_tag_from_string(std::string_view s);

namespace state {
struct Initializing {};
struct AwaitTarget {};
struct ConfirmTarget {
  TargetQuery query;
  MatchOutcome outcome;
};
struct Reinitializing {
  std::string target;
  std::int64_t elapsed_us = 0;
  std::int64_t beeps = 0;
};
struct Scanning {
  std::int64_t entered_us = 0;
  std::int64_t deadline_us = 0;
};
struct Announcing {
  KeyFramePtr keyframe;
  Localization localization;
};
struct BranchSelect {
  KeyFramePtr keyframe;
};
struct Navigating {
  KeyFramePtr keyframe;
};
struct Perceiving {
  KeyFramePtr keyframe;
};
struct OpenDialogue {
  KeyFramePtr keyframe;
  std::vector<DialogueTurn> history;
};
struct TimedOut {};
} // namespace state

using SessionState =
    std::variant<state::Initializing, state::AwaitTarget, state::ConfirmTarget,
                 state::Reinitializing, state::Scanning, state::Announcing, state::BranchSelect,
                 state::Navigating, state::Perceiving, state::OpenDialogue, state::TimedOut>;

StateTag tag_of(const SessionState &s);

// ---- legality table -------------------------------------------------------

struct TransitionRule {
  StateTag from;
  std::string_view event; // event tag; "find" is an utterance starting with "find"
  StateTag to;
  bool operator==(const TransitionRule &) const = default;
};

/// Every transition handle_event may take, self-loops included.
const std::vector<TransitionRule> &transition_table();
bool is_legal_transition(StateTag from, std::string_view event, StateTag to);

/// Legality-table event name for an event ("find" for find utterances).
std::string transition_event_name(const Event &e);

// ---- session --------------------------------------------------------------

struct PendingQuery {
  FeedbackKind kind = FeedbackKind::SceneDescription;
  std::string question;
};

/// One interaction stream. A plain value: copying it forks the session.
struct Session {
  ScenePtr scene;
  Config config;
  std::shared_ptr<const EmbeddingProvider> embedder;

  SessionState state;
  Vocabulary vocab;
  CameraPose pose;
  std::int64_t now_us = 0;

  /// What the user called the current target, and the label detection runs on.
  std::string target_wording;
  std::string target_label;

  std::uint64_t keyframe_count = 0;
  std::uint64_t query_count = 0;
  std::uint64_t live_frame_count = 0;
  std::uint64_t reinit_count = 0;
  /// The first feedback query after a capture is answered on the keyframe;
  /// later ones on the live frame.
  bool keyframe_consumed = false;
  std::map<std::string, PendingQuery> pending;

  double now_s() const { return static_cast<double>(now_us) / 1e6; }
};

struct Step {
  std::vector<Effect> effects;
  /// The event arrived while reinitializing; the driver should re-submit it
  /// once scanning starts.
  bool deferred = false;
};

/// Captures the scenario at the start pose, initializes the vocabulary and
/// leaves the session waiting for a target.
std::pair<Session, Step> new_session(ScenePtr scene, const CameraPose &start_pose,
                                     const Config &config,
                                     std::shared_ptr<const EmbeddingProvider> embedder = nullptr);

Step handle_event(Session &session, const Event &event);

/// Advances simulated time. Same as handle_event with a Tick.
Step tick(Session &session, double dt_s);

/// Pure form of handle_event.
std::pair<Session, Step> apply_event(Session session, const Event &event);

std::int64_t seconds_to_us(double s);

} // namespace objsearch
