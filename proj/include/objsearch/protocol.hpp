#pragma once

#include "objsearch/json.hpp"
#include "objsearch/runner.hpp"
#include "objsearch/session.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace objsearch {

// One JSON object per line. Client and server messages carry a "type".

namespace client_msg {
struct CreateSession {
  std::string scene;
  Json config = Json::object(); // overrides
  std::optional<Json> start_pose; // partial, resolved against the scene's
  double auto_tick_hz = 0;
  bool operator==(const CreateSession &) const = default;
};
struct SendEvent {
  std::string session_id;
  Json event; // frame_pose may be partial
  bool operator==(const SendEvent &) const = default;
};
struct Subscribe {
  std::string session_id;
  bool operator==(const Subscribe &) const = default;
};
struct Close {
  std::string session_id;
  bool operator==(const Close &) const = default;
};
} // namespace client_msg

using ClientMessage = std::variant<client_msg::CreateSession, client_msg::SendEvent,
                                   client_msg::Subscribe, client_msg::Close>;

Json to_json(const ClientMessage &m);
/// Throws ParseError.
ClientMessage client_message_from_json(const Json &j);

struct SnapshotObject {
  std::string id;
  std::string label;
  Rect footprint;
  double base_height = 0;
  double top_height = 0;
  std::optional<std::string> on_top_of;
  double visibility = 0;
  std::optional<BBox> bbox;
  bool operator==(const SnapshotObject &) const = default;
};

namespace server_msg {
struct SessionCreated {
  std::string session_id;
  StateTag state = StateTag::AwaitTarget;
  std::vector<std::string> vocab;
  bool operator==(const SessionCreated &) const = default;
};
struct StateChanged {
  std::string session_id;
  StateTag state = StateTag::AwaitTarget;
  double t = 0;
  bool operator==(const StateChanged &) const = default;
};
struct EffectEmitted {
  std::string session_id;
  double t = 0;
  Json effect;
  bool operator==(const EffectEmitted &) const = default;
};
/// Ground truth for rendering the simulator; the assisted user has no such
/// channel.
struct WorldSnapshot {
  std::string session_id;
  double t = 0;
  CameraPose pose;
  std::vector<SnapshotObject> objects;
  std::optional<std::string> keyframe_id;
  std::optional<BBox> keyframe_bbox;
  bool operator==(const WorldSnapshot &) const = default;
};
struct SessionClosed {
  std::string session_id;
  bool operator==(const SessionClosed &) const = default;
};
struct Error {
  std::string code;
  std::string detail;
  std::optional<std::string> session_id;
  bool operator==(const Error &) const = default;
};
} // namespace server_msg

using ServerMessage =
    std::variant<server_msg::SessionCreated, server_msg::StateChanged, server_msg::EffectEmitted,
                 server_msg::WorldSnapshot, server_msg::SessionClosed, server_msg::Error>;

Json to_json(const ServerMessage &m);
ServerMessage server_message_from_json(const Json &j);

/// Error codes sent to clients.
namespace error_code {
inline constexpr const char *kBadMessage = "bad_message";
inline constexpr const char *kUnknownSession = "unknown_session";
inline constexpr const char *kUnknownScene = "unknown_scene";
inline constexpr const char *kInvalidConfig = "invalid_config";
inline constexpr const char *kInvalidEvent = "invalid_event";
inline constexpr const char *kSubscriberOverflow = "subscriber_overflow";
inline constexpr const char *kInternal = "internal";
} // namespace error_code

server_msg::WorldSnapshot make_world_snapshot(const std::string &session_id, const Session &session);

/// Server messages for transcript records, in emission order.
std::vector<ServerMessage> messages_for(const std::string &session_id,
                                        const std::vector<TranscriptRecord> &records,
                                        StateTag previous_state);

} // namespace objsearch
