#pragma once

#include "objsearch/feedback.hpp"
#include "objsearch/runner.hpp"

#include <map>
#include <string>
#include <vector>

namespace objsearch::testing {

struct GoldenCheck {
  std::string name;
  bool ok = false;
  std::string detail;
};

inline std::vector<std::string> spoken_texts(const TranscriptRecord &r) {
  std::vector<std::string> out;
  for (const auto &e : r.effects) {
    if (const auto *s = std::get_if<effect::Speak>(&e)) out.push_back(s->text);
  }
  return out;
}

/// Answers spoken for feedback queries of the given kind, in order.
inline std::vector<std::string> answers_of(const std::vector<TranscriptRecord> &records, FeedbackKind kind) {
  std::map<std::string, FeedbackKind> kinds;
  std::vector<std::string> out;
  for (const auto &r : records) {
    for (const auto &e : r.effects) {
      if (const auto *q = std::get_if<effect::QueryFeedback>(&e)) kinds[q->request_id] = q->kind;
    }
    if (!r.event) continue;
    const auto *fr = std::get_if<event::FeedbackResult>(&*r.event);
    if (fr == nullptr || !fr->ok) continue;
    const auto it = kinds.find(fr->request_id);
    if (it == kinds.end() || it->second != kind) continue;
    for (auto &t : spoken_texts(r)) out.push_back(t);
  }
  return out;
}

inline std::string first_sentence(const std::string &text) {
  const auto dot = text.find(". ");
  return dot == std::string::npos ? text : text.substr(0, dot + 1);
}

/// Properties (a) through (d) of the bundled office episode.
inline std::vector<GoldenCheck> check_golden(const std::vector<TranscriptRecord> &records) {
  std::vector<GoldenCheck> out;

  bool confirm = false;
  std::string announce_text;
  for (const auto &r : records) {
    for (const auto &t : spoken_texts(r)) {
      if (t == "You want to find office chair, please confirm.") confirm = true;
      if (announce_text.empty() && t.rfind("office chair,", 0) == 0) announce_text = t;
    }
  }
  out.push_back({"confirmation phrase", confirm, ""});

  const auto loc = parse_announcement(announce_text);
  out.push_back({"chair announcement", loc && loc->label == "office chair", announce_text});

  const auto scenes = answers_of(records, FeedbackKind::SceneDescription);
  const bool cookies = !scenes.empty() && scenes.front().find("cookies") != std::string::npos;
  out.push_back({"description mentions cookies", cookies, scenes.empty() ? "" : scenes.front()});

  const auto routes = answers_of(records, FeedbackKind::RoutePlan);
  const bool route = !routes.empty() && first_sentence(routes.front()) == prompts::kAlignmentReminder &&
                     count_words(routes.front()) <= 100;
  out.push_back({"route plan reminder and length", route, routes.empty() ? "" : routes.front()});
  return out;
}

} // namespace objsearch::testing
