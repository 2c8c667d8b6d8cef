#pragma once

#include "objsearch/feedback.hpp"
#include "objsearch/json.hpp"
#include "objsearch/session.hpp"

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace objsearch {

struct TimedEvent {
  double t = 0;
  Json event; // frame_pose entries may hold partial poses
};

struct Script {
  std::optional<CameraPose> start_pose;
  std::vector<TimedEvent> events;
};

/// Either a bare list of {t, event} or {start_pose?, events: [...]}.
/// Timestamps must be non-negative and non-decreasing.
Script parse_script(std::string_view text);
Script load_script_file(const std::string &path);

struct TranscriptRecord {
  double t = 0;
  std::string origin; // init, script, clock, backend, queue, client
  std::optional<Event> event;
  StateTag state = StateTag::Initializing;
  std::vector<Effect> effects;
  /// Set on the init record only.
  std::optional<Config> config;
  std::optional<CameraPose> start_pose;
};

Json record_to_json(const TranscriptRecord &r);
TranscriptRecord record_from_json(const Json &j);
std::string transcript_to_jsonl(const std::vector<TranscriptRecord> &records);
std::vector<TranscriptRecord> transcript_from_jsonl(std::string_view text);

/// Live driver around a Session: answers feedback queries through a
/// backend, re-submits events deferred during reinitialization, and keeps
/// the transcript.
class Runner {
public:
  Runner(ScenePtr scene, const CameraPose &start_pose, const Config &config,
         std::shared_ptr<FeedbackBackend> backend,
         std::shared_ptr<const EmbeddingProvider> embedder = nullptr);

  /// Applies the event and everything it cascades into; returns the new records.
  std::vector<TranscriptRecord> submit(const Event &event, std::string_view origin = "client");

  /// Ticks the clock forward to simulated time `t_s` (no-op when not ahead).
  std::vector<TranscriptRecord> advance_to(double t_s);

  const Session &session() const { return session_; }
  const std::vector<TranscriptRecord> &transcript() const { return transcript_; }

private:
  TranscriptRecord record(std::optional<Event> event, std::string_view origin, std::vector<Effect> effects);

  Session session_;
  std::shared_ptr<FeedbackBackend> backend_;
  std::deque<Event> deferred_;
  std::vector<TranscriptRecord> transcript_;
};

/// Runs a whole script from the scene's start pose (or the script's).
std::vector<TranscriptRecord> run_script(ScenePtr scene, const Script &script, const Config &config,
                                         std::shared_ptr<FeedbackBackend> backend);

struct ReplayMismatch {
  std::size_t index = 0;
  std::string detail;
};

/// Feeds the recorded events to a fresh session and compares state tags and
/// effects record by record.
std::optional<ReplayMismatch> verify_replay(ScenePtr scene, const std::vector<TranscriptRecord> &records);

} // namespace objsearch
