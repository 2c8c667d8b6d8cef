#include "objsearch/runner.hpp"

#include "objsearch/error.hpp"

#include <sstream>

namespace objsearch {

Script parse_script(std::string_view text) {
  namespace jf = json_field;
  const Json doc = parse_json(text, "script");
  Script script;
  const Json *list = &doc;
  if (doc.is_object()) {
    if (doc.contains("start_pose")) script.start_pose = pose_from_json(doc.at("start_pose"), {}, "start_pose");
    list = &jf::array(doc, "events", "");
  } else if (!doc.is_array()) {
    throw ParseError("script: expected a list of events or an object with 'events'");
  }
  double last = 0;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const std::string path = "events[" + std::to_string(i) + "]";
    const Json &item = (*list)[i];
    if (!item.is_object()) throw ParseError(path + ": expected an object");
    TimedEvent te;
    te.t = jf::number(item, "t", path);
    if (te.t < 0) throw ParseError(path + ".t: negative time");
    if (te.t < last) throw ParseError(path + ".t: timestamps must be non-decreasing");
    last = te.t;
    te.event = jf::object(item, "event", path);
    // Fail early on malformed events; poses resolve later against the live pose.
    try {
      (void)event_from_json(te.event);
    } catch (const ParseError &e) {
      throw ParseError(path + ": " + e.what());
    }
    script.events.push_back(std::move(te));
  }
  return script;
}

Script load_script_file(const std::string &path) {
  try {
    return parse_script(read_file(path));
  } catch (const ParseError &e) {
    throw ParseError(path + ": " + e.what());
  }
}

Json record_to_json(const TranscriptRecord &r) {
  Json j{{"t", r.t}, {"origin", r.origin}};
  j["event"] = r.event ? event_to_json(*r.event) : Json(nullptr);
  j["state"] = to_string(r.state);
  Json effects = Json::array();
  for (const auto &e : r.effects) effects.push_back(effect_to_json(e));
  j["effects"] = std::move(effects);
  if (r.config) j["config"] = config_to_json(*r.config);
  if (r.start_pose) j["start_pose"] = pose_to_json(*r.start_pose);
  return j;
}

TranscriptRecord record_from_json(const Json &j) {
  namespace jf = json_field;
  TranscriptRecord r;
  r.t = jf::number(j, "t", "record");
  r.origin = jf::string(j, "origin", "record");
  if (!j.contains("event")) throw ParseError("record: missing 'event'");
  if (!j.at("event").is_null()) r.event = event_from_json(j.at("event"));
  r.state = state_tag_from_string(jf::string(j, "state", "record"));
  for (const auto &e : jf::array(j, "effects", "record")) r.effects.push_back(effect_from_json(e));
  if (j.contains("config")) r.config = config_from_json(j.at("config"));
  if (j.contains("start_pose")) r.start_pose = pose_from_json(j.at("start_pose"), {}, "record.start_pose");
  return r;
}

std::string transcript_to_jsonl(const std::vector<TranscriptRecord> &records) {
  std::string out;
  for (const auto &r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<TranscriptRecord> transcript_from_jsonl(std::string_view text) {
  std::vector<TranscriptRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    const auto line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(parse_json(line, "record")));
    } catch (const ParseError &e) {
      throw ParseError("transcript line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

Runner::Runner(ScenePtr scene, const CameraPose &start_pose, const Config &config,
               std::shared_ptr<FeedbackBackend> backend, std::shared_ptr<const EmbeddingProvider> embedder)
    : backend_(std::move(backend)) {
  auto [session, step] = new_session(std::move(scene), start_pose, config, std::move(embedder));
  session_ = std::move(session);
  TranscriptRecord init = record(std::nullopt, "init", std::move(step.effects));
  init.config = config;
  init.start_pose = start_pose;
  transcript_.back() = init;
}

TranscriptRecord Runner::record(std::optional<Event> event, std::string_view origin,
                                std::vector<Effect> effects) {
  TranscriptRecord r;
  r.t = session_.now_s();
  r.origin = std::string(origin);
  r.event = std::move(event);
  r.state = tag_of(session_.state);
  r.effects = std::move(effects);
  transcript_.push_back(r);
  return r;
}

std::vector<TranscriptRecord> Runner::submit(const Event &event, std::string_view origin) {
  std::vector<TranscriptRecord> out;
  std::deque<std::pair<Event, std::string>> work;
  work.emplace_back(event, std::string(origin));
  while (!work.empty()) {
    auto [e, from] = std::move(work.front());
    work.pop_front();
    const StateTag before = tag_of(session_.state);
    Step step = handle_event(session_, e);
    const StateTag after = tag_of(session_.state);
    if (step.deferred) deferred_.push_back(e);

    std::vector<std::pair<Event, std::string>> follow_ups;
    for (const auto &eff : step.effects) {
      const auto *q = std::get_if<effect::QueryFeedback>(&eff);
      if (q == nullptr) continue;
      event::FeedbackResult result{q->request_id, {}, true};
      if (!backend_) {
        result.ok = false;
        result.text = "no feedback backend configured";
      } else {
        FeedbackQuery fq;
        fq.request_id = q->request_id;
        fq.kind = q->kind;
        fq.request = q->request;
        fq.target = q->target;
        fq.question = q->question;
        fq.pose = q->pose;
        fq.focus = q->keyframe.get();
        fq.scene = session_.scene.get();
        fq.step_length_m = session_.config.step_length_m;
        try {
          result.text = backend_->respond(fq).text;
        } catch (const Error &err) {
          result.ok = false;
          result.text = err.what();
        }
      }
      follow_ups.emplace_back(std::move(result), "backend");
    }
    out.push_back(record(std::move(e), from, std::move(step.effects)));
    // Backend answers go first so they land right after their query.
    for (auto it = follow_ups.rbegin(); it != follow_ups.rend(); ++it) work.push_front(std::move(*it));

    if (before == StateTag::Reinitializing && after != StateTag::Reinitializing) {
      if (after == StateTag::Scanning) {
        for (auto &d : deferred_) work.emplace_back(std::move(d), "queue");
      }
      deferred_.clear();
    }
  }
  return out;
}

std::vector<TranscriptRecord> Runner::advance_to(double t_s) {
  const std::int64_t target = seconds_to_us(t_s);
  if (target <= session_.now_us) return {};
  return submit(event::Tick{static_cast<double>(target - session_.now_us) / 1e6}, "clock");
}

std::vector<TranscriptRecord> run_script(ScenePtr scene, const Script &script, const Config &config,
                                         std::shared_ptr<FeedbackBackend> backend) {
  if (!scene) throw PreconditionError("run_script: no scene");
  CameraPose start;
  if (script.start_pose) start = *script.start_pose;
  else if (scene->start_pose) start = *scene->start_pose;
  else start.position = scene->bounds.center();
  Runner runner(std::move(scene), start, config, std::move(backend));
  for (const auto &te : script.events) {
    runner.advance_to(te.t);
    runner.submit(event_from_json(te.event, runner.session().pose), "script");
  }
  return runner.transcript();
}

std::optional<ReplayMismatch> verify_replay(ScenePtr scene, const std::vector<TranscriptRecord> &records) {
  if (records.empty()) return ReplayMismatch{0, "empty transcript"};
  const TranscriptRecord &init = records.front();
  if (init.event || !init.config || !init.start_pose) {
    return ReplayMismatch{0, "first record is not an init record"};
  }
  const auto effects_json = [](const std::vector<Effect> &effects) {
    Json j = Json::array();
    for (const auto &e : effects) j.push_back(effect_to_json(e));
    return j;
  };
  auto [session, step] = new_session(std::move(scene), *init.start_pose, *init.config);
  const auto compare = [&](std::size_t i, const Step &st) -> std::optional<ReplayMismatch> {
    const TranscriptRecord &r = records[i];
    if (tag_of(session.state) != r.state) {
      return ReplayMismatch{i, "state " + std::string(to_string(tag_of(session.state))) + " != recorded " +
                                   std::string(to_string(r.state))};
    }
    const Json got = effects_json(st.effects);
    const Json want = effects_json(r.effects);
    if (got != want) return ReplayMismatch{i, "effects differ: " + got.dump() + " vs " + want.dump()};
    if (seconds_to_us(r.t) != session.now_us) return ReplayMismatch{i, "time differs"};
    return std::nullopt;
  };
  if (auto m = compare(0, step)) return m;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (!records[i].event) return ReplayMismatch{i, "record has no event"};
    const Step st = handle_event(session, *records[i].event);
    if (auto m = compare(i, st)) return m;
  }
  return std::nullopt;
}

} // namespace objsearch
