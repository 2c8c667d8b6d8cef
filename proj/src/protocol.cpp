#include "objsearch/protocol.hpp"

#include "objsearch/codec.hpp"
#include "objsearch/error.hpp"

namespace objsearch {

namespace {

template <class... Ts> struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

Json rect_json(const Rect &r) { return Json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

Rect rect_from(const Json &j, const std::string &path) {
  namespace jf = json_field;
  return {jf::number(j, "x", path), jf::number(j, "y", path), jf::number(j, "w", path),
          jf::number(j, "h", path)};
}

std::optional<std::string> optional_string(const Json &j, const char *key, const std::string &path) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return json_field::string(j, key, path);
}

} // namespace

Json to_json(const ClientMessage &m) {
  return std::visit(overloaded{
                        [](const client_msg::CreateSession &c) {
                          Json j{{"type", "create_session"}, {"scene", c.scene}, {"config", c.config}};
                          if (c.start_pose) j["start_pose"] = *c.start_pose;
                          j["auto_tick_hz"] = c.auto_tick_hz;
                          return j;
                        },
                        [](const client_msg::SendEvent &s) {
                          return Json{{"type", "send_event"}, {"session_id", s.session_id}, {"event", s.event}};
                        },
                        [](const client_msg::Subscribe &s) {
                          return Json{{"type", "subscribe"}, {"session_id", s.session_id}};
                        },
                        [](const client_msg::Close &c) {
                          return Json{{"type", "close"}, {"session_id", c.session_id}};
                        },
                    },
                    m);
}

ClientMessage client_message_from_json(const Json &j) {
  namespace jf = json_field;
  if (!j.is_object()) throw ParseError("message: expected an object");
  const std::string type = jf::string(j, "type", "message");
  if (type == "create_session") {
    client_msg::CreateSession c;
    c.scene = jf::string(j, "scene", "message");
    if (j.contains("config")) c.config = jf::object(j, "config", "message");
    if (j.contains("start_pose") && !j.at("start_pose").is_null()) {
      c.start_pose = jf::object(j, "start_pose", "message");
    }
    c.auto_tick_hz = jf::number_or(j, "auto_tick_hz", 0, "message");
    if (c.auto_tick_hz < 0) throw ParseError("message.auto_tick_hz: must not be negative");
    return c;
  }
  if (type == "send_event") {
    client_msg::SendEvent s{jf::string(j, "session_id", "message"), jf::object(j, "event", "message")};
    (void)event_from_json(s.event); // reject malformed events up front
    return s;
  }
  if (type == "subscribe") return client_msg::Subscribe{jf::string(j, "session_id", "message")};
  if (type == "close") return client_msg::Close{jf::string(j, "session_id", "message")};
  throw ParseError("message: unknown type '" + type + "'");
}

Json to_json(const ServerMessage &m) {
  return std::visit(
      overloaded{
          [](const server_msg::SessionCreated &s) {
            return Json{{"type", "session_created"},
                        {"session_id", s.session_id},
                        {"state", to_string(s.state)},
                        {"vocab", s.vocab}};
          },
          [](const server_msg::StateChanged &s) {
            return Json{{"type", "state_changed"}, {"session_id", s.session_id}, {"state", to_string(s.state)}, {"t", s.t}};
          },
          [](const server_msg::EffectEmitted &e) {
            return Json{{"type", "effect"}, {"session_id", e.session_id}, {"t", e.t}, {"effect", e.effect}};
          },
          [](const server_msg::WorldSnapshot &w) {
            Json objects = Json::array();
            for (const auto &o : w.objects) {
              objects.push_back(Json{{"id", o.id},
                                     {"label", o.label},
                                     {"footprint", rect_json(o.footprint)},
                                     {"base_height", o.base_height},
                                     {"top_height", o.top_height},
                                     {"on_top_of", o.on_top_of ? Json(*o.on_top_of) : Json(nullptr)},
                                     {"visibility", o.visibility},
                                     {"bbox", o.bbox ? bbox_to_json(*o.bbox) : Json(nullptr)}});
            }
            return Json{{"type", "world_snapshot"},
                        {"simulator_only", true},
                        {"session_id", w.session_id},
                        {"t", w.t},
                        {"pose", pose_to_json(w.pose)},
                        {"objects", objects},
                        {"keyframe_id", w.keyframe_id ? Json(*w.keyframe_id) : Json(nullptr)},
                        {"keyframe_bbox", w.keyframe_bbox ? bbox_to_json(*w.keyframe_bbox) : Json(nullptr)}};
          },
          [](const server_msg::SessionClosed &c) {
            return Json{{"type", "session_closed"}, {"session_id", c.session_id}};
          },
          [](const server_msg::Error &e) {
            Json j{{"type", "error"}, {"code", e.code}, {"detail", e.detail}};
            if (e.session_id) j["session_id"] = *e.session_id;
            return j;
          },
      },
      m);
}

ServerMessage server_message_from_json(const Json &j) {
  namespace jf = json_field;
  if (!j.is_object()) throw ParseError("message: expected an object");
  const std::string type = jf::string(j, "type", "message");
  const std::string p = "message";
  if (type == "session_created") {
    server_msg::SessionCreated s;
    s.session_id = jf::string(j, "session_id", p);
    s.state = state_tag_from_string(jf::string(j, "state", p));
    for (const auto &l : jf::array(j, "vocab", p)) {
      if (!l.is_string()) throw ParseError("message.vocab: expected strings");
      s.vocab.push_back(l.get<std::string>());
    }
    return s;
  }
  if (type == "state_changed") {
    return server_msg::StateChanged{jf::string(j, "session_id", p),
                                    state_tag_from_string(jf::string(j, "state", p)), jf::number(j, "t", p)};
  }
  if (type == "effect") {
    server_msg::EffectEmitted e{jf::string(j, "session_id", p), jf::number(j, "t", p),
                                jf::object(j, "effect", p)};
    (void)effect_from_json(e.effect);
    return e;
  }
  if (type == "world_snapshot") {
    server_msg::WorldSnapshot w;
    w.session_id = jf::string(j, "session_id", p);
    w.t = jf::number(j, "t", p);
    w.pose = pose_from_json(jf::object(j, "pose", p), {}, "message.pose");
    const auto &objects = jf::array(j, "objects", p);
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const Json &o = objects[i];
      const std::string op = "message.objects[" + std::to_string(i) + "]";
      SnapshotObject so;
      so.id = jf::string(o, "id", op);
      so.label = jf::string(o, "label", op);
      so.footprint = rect_from(jf::object(o, "footprint", op), op + ".footprint");
      so.base_height = jf::number(o, "base_height", op);
      so.top_height = jf::number(o, "top_height", op);
      so.on_top_of = optional_string(o, "on_top_of", op);
      so.visibility = jf::number(o, "visibility", op);
      if (o.contains("bbox") && !o.at("bbox").is_null()) so.bbox = bbox_from_json(o.at("bbox"), op + ".bbox");
      w.objects.push_back(std::move(so));
    }
    w.keyframe_id = optional_string(j, "keyframe_id", p);
    if (j.contains("keyframe_bbox") && !j.at("keyframe_bbox").is_null()) {
      w.keyframe_bbox = bbox_from_json(j.at("keyframe_bbox"), "message.keyframe_bbox");
    }
    return w;
  }
  if (type == "session_closed") return server_msg::SessionClosed{jf::string(j, "session_id", p)};
  if (type == "error") {
    return server_msg::Error{jf::string(j, "code", p), jf::string(j, "detail", p),
                             optional_string(j, "session_id", p)};
  }
  throw ParseError("message: unknown type '" + type + "'");
}

server_msg::WorldSnapshot make_world_snapshot(const std::string &session_id, const Session &session) {
  server_msg::WorldSnapshot w;
  w.session_id = session_id;
  w.t = session.now_s();
  w.pose = session.pose;
  for (const auto &o : session.scene->objects) {
    SnapshotObject so{o.id, o.label, o.footprint, o.base_height, o.top_height, o.on_top_of, 0, std::nullopt};
    if (auto view = project_object(*session.scene, session.pose, o.id)) {
      so.visibility = view->visibility;
      so.bbox = view->bbox;
    }
    w.objects.push_back(std::move(so));
  }
  const KeyFramePtr *kf = std::visit(
      overloaded{
          [](const state::Announcing &s) { return &s.keyframe; },
          [](const state::BranchSelect &s) { return &s.keyframe; },
          [](const state::Navigating &s) { return &s.keyframe; },
          [](const state::Perceiving &s) { return &s.keyframe; },
          [](const state::OpenDialogue &s) { return &s.keyframe; },
          [](const auto &) -> const KeyFramePtr * { return nullptr; },
      },
      session.state);
  if (kf != nullptr && *kf) {
    w.keyframe_id = (*kf)->id;
    w.keyframe_bbox = (*kf)->bbox;
  }
  return w;
}

std::vector<ServerMessage> messages_for(const std::string &session_id,
                                        const std::vector<TranscriptRecord> &records, StateTag previous) {
  std::vector<ServerMessage> out;
  for (const auto &r : records) {
    for (const auto &e : r.effects) out.push_back(server_msg::EffectEmitted{session_id, r.t, effect_to_json(e)});
    if (r.state != previous) {
      out.push_back(server_msg::StateChanged{session_id, r.state, r.t});
      previous = r.state;
    }
  }
  return out;
}

} // namespace objsearch
