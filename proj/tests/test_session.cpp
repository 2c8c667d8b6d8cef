#include "objsearch/error.hpp"
#include "objsearch/session.hpp"

#include "fuzz.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace objsearch;
using namespace objsearch::testing;

namespace {

std::vector<std::string> spoken(const Step &step) {
  std::vector<std::string> out;
  for (const auto &e : step.effects) {
    if (const auto *s = std::get_if<effect::Speak>(&e)) out.push_back(s->text);
  }
  return out;
}

std::size_t count_earcons(const Step &step, EarconKind kind) {
  std::size_t n = 0;
  for (const auto &e : step.effects) {
    if (const auto *ec = std::get_if<effect::Earcon>(&e); ec && ec->kind == kind) ++n;
  }
  return n;
}

template <class T> const T *find_effect(const Step &step) {
  for (const auto &e : step.effects) {
    if (const auto *p = std::get_if<T>(&e)) return p;
  }
  return nullptr;
}

Session office_session(Config config = {}) {
  return new_session(office(), pose_at(0.3, 0.3, 30), config).first;
}

ScenePtr empty_scene() {
  auto s = std::make_shared<Scene>();
  s->name = "empty";
  s->bounds = {0, 0, 4, 4};
  return s;
}

// Session confirmed on an unrelated target: now reinitializing.
Session reinitializing_session() {
  Session s = office_session();
  handle_event(s, event::Utterance{"Find a teapot"});
  handle_event(s, event::ButtonA{});
  return s;
}

Session scanning_for_chair(Config config = {}) {
  Session s = office_session(config);
  handle_event(s, event::Utterance{"Find office chair"});
  handle_event(s, event::ButtonA{});
  return s;
}

} // namespace

TEST(NewSession, OfficeVocabularyFromStartView) {
  const auto pose = pose_at(0.3, 0.3, 30);
  auto [s, step] = new_session(office(), pose, Config{});
  EXPECT_EQ(tag_of(s.state), StateTag::AwaitTarget);
  EXPECT_EQ(s.vocab.labels(), list_visible_labels(*office(), pose));
  EXPECT_TRUE(s.vocab.contains("office chair"));
  const auto *reinit = find_effect<effect::ReinitDetector>(step);
  ASSERT_TRUE(reinit);
  EXPECT_EQ(reinit->vocab, s.vocab);
  EXPECT_EQ(spoken(step), std::vector<std::string>{"Ready. Say find and the name of an object."});
}

TEST(NewSession, EmptySceneGoesUnrelated) {
  auto [s, step] = new_session(empty_scene(), pose_at(1, 1, 0), Config{});
  EXPECT_TRUE(s.vocab.empty());
  EXPECT_TRUE(find_effect<effect::Log>(step)->record.at("empty_vocab").get<bool>());
  handle_event(s, event::Utterance{"Find a socket"});
  const auto &c = std::get<state::ConfirmTarget>(s.state);
  EXPECT_TRUE(std::holds_alternative<Unrelated>(c.outcome));
  handle_event(s, event::ButtonA{});
  EXPECT_EQ(tag_of(s.state), StateTag::Reinitializing);
  EXPECT_EQ(s.vocab.labels(), std::vector<std::string>{"socket"});
}

TEST(NewSession, InvalidConfigRejected) {
  Config c;
  c.scan_timeout_s = 0;
  EXPECT_THROW(new_session(office(), pose_at(0.3, 0.3, 30), c), InvariantError);
  c = {};
  c.confidence_threshold = 1.5;
  EXPECT_THROW(validate(c), InvariantError);
  c = {};
  c.similarity_threshold = 0;
  EXPECT_THROW(validate(c), InvariantError);
}

TEST(ConfigJson, RoundTripAndUnknownKeys) {
  Config c;
  c.scan_timeout_s = 30;
  c.distance_mode = DistanceMode::Horizontal;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  EXPECT_EQ(config_from_json(Json{{"beep_hz", 4}}).beep_hz, 4);
  EXPECT_THROW(config_from_json(Json{{"beep_rate", 4}}), Error);
  const Config d;
  EXPECT_EQ(d.confidence_threshold, 0.3);
  EXPECT_EQ(d.similarity_threshold, 0.8);
  EXPECT_EQ(d.scan_timeout_s, 45);
  EXPECT_EQ(d.beep_hz, 3);
  EXPECT_EQ(d.step_length_m, 0.7);
}

TEST(Confirm, PhraseIsVerbatim) {
  Session s = office_session();
  const Step step = handle_event(s, event::Utterance{"Find office chair"});
  EXPECT_EQ(tag_of(s.state), StateTag::ConfirmTarget);
  EXPECT_EQ(spoken(step), std::vector<std::string>{"You want to find office chair, please confirm."});
}

TEST(Confirm, ButtonBRespecifies) {
  Session s = office_session();
  handle_event(s, event::Utterance{"Find office chair"});
  handle_event(s, event::ButtonB{});
  EXPECT_EQ(tag_of(s.state), StateTag::AwaitTarget);
}

TEST(Confirm, MatchStartsScanning) {
  Session s = scanning_for_chair();
  EXPECT_EQ(tag_of(s.state), StateTag::Scanning);
  EXPECT_EQ(s.target_label, "office chair");
  const auto &sc = std::get<state::Scanning>(s.state);
  EXPECT_EQ(sc.deadline_us - sc.entered_us, 45'000'000);
}

TEST(Confirm, UnrelatedReinitializesWithExtendedVocab) {
  Session s = office_session();
  const auto before = s.vocab;
  handle_event(s, event::Utterance{"Find a teapot"});
  const Step step = handle_event(s, event::ButtonA{});
  EXPECT_EQ(tag_of(s.state), StateTag::Reinitializing);
  const auto *r = find_effect<effect::ReinitDetector>(step);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->vocab, extend_vocab(before, "teapot"));
}

TEST(Reinit, SixBeepsInTwoSeconds) {
  for (double dt : {2.0, 1.0, 0.5, 0.1, 0.3, 0.7}) {
    Session s = reinitializing_session();
    std::size_t beeps = 0;
    std::int64_t elapsed = 0;
    while (elapsed < 2'000'000) {
      const double step_s = std::min<double>(dt, (2'000'000 - elapsed) / 1e6);
      beeps += count_earcons(tick(s, step_s), EarconKind::InitBeep);
      elapsed += seconds_to_us(step_s);
    }
    EXPECT_EQ(beeps, 6u) << dt;
    EXPECT_EQ(tag_of(s.state), StateTag::Reinitializing);
  }
}

TEST(Reinit, BeepsAreRoundOfThreeT) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::int64_t> total(1, 2'999'999), piece(1, 700'000);
  for (int trial = 0; trial < 300; ++trial) {
    Session s = reinitializing_session();
    const std::int64_t T = total(rng);
    std::int64_t elapsed = 0;
    std::size_t beeps = 0;
    while (elapsed < T) {
      const std::int64_t d = std::min(piece(rng), T - elapsed);
      beeps += count_earcons(tick(s, d / 1e6), EarconKind::InitBeep);
      elapsed += d;
    }
    EXPECT_EQ(beeps, static_cast<std::size_t>(std::llround(3.0 * T / 1e6))) << T;
  }
}

TEST(Reinit, EndsInScanningWithNineBeeps) {
  Session s = reinitializing_session();
  const Step step = tick(s, 5.0);
  EXPECT_EQ(count_earcons(step, EarconKind::InitBeep), 9u);
  EXPECT_EQ(tag_of(s.state), StateTag::Scanning);
  const auto &sc = std::get<state::Scanning>(s.state);
  EXPECT_EQ(sc.entered_us, 3'000'000);
}

TEST(Reinit, DefersButtonsButNotFind) {
  Session s = reinitializing_session();
  EXPECT_TRUE(handle_event(s, event::ButtonA{}).deferred);
  EXPECT_TRUE(handle_event(s, event::FramePose{pose_at(0.3, 0.3, 35.3)}).deferred);
  EXPECT_EQ(tag_of(s.state), StateTag::Reinitializing);
  EXPECT_FALSE(handle_event(s, event::Utterance{"find the desk"}).deferred);
  EXPECT_EQ(tag_of(s.state), StateTag::ConfirmTarget);
}

TEST(Scan, TimesOutAtExactlyFortyFiveSeconds) {
  Session s = scanning_for_chair();
  handle_event(s, event::FramePose{pose_at(0.3, 0.3, 200)});
  tick(s, 44.999999);
  EXPECT_EQ(tag_of(s.state), StateTag::Scanning);
  const Step step = tick(s, 0.000001);
  EXPECT_EQ(tag_of(s.state), StateTag::TimedOut);
  EXPECT_EQ(spoken(step), std::vector<std::string>{
                              "I could not find the office chair. Press A for a scene description, or B to "
                              "specify a new target."});
}

TEST(Scan, HalfSecondTicksTimeOutOnTheNinetiethTick) {
  Session s = scanning_for_chair();
  handle_event(s, event::FramePose{pose_at(0.3, 0.3, 200)});
  for (int i = 1; i <= 90; ++i) {
    tick(s, 0.5);
    EXPECT_EQ(tag_of(s.state) == StateTag::TimedOut, i == 90) << i;
  }
}

TEST(Scan, FramesDoNotResetTheDeadline) {
  Session s = scanning_for_chair();
  for (int i = 0; i < 44; ++i) {
    handle_event(s, event::FramePose{pose_at(0.3, 0.3, 180 + i)});
    tick(s, 1.0);
  }
  EXPECT_EQ(tag_of(s.state), StateTag::Scanning);
  tick(s, 1.0);
  EXPECT_EQ(tag_of(s.state), StateTag::TimedOut);
}

TEST(Scan, ConfidenceGateIsStrict) {
  const CameraPose p = pose_at(0.3, 0.3, 35.3);
  const auto dets = synth_detect(*office(), p, Vocabulary({"office chair"}), 0);
  ASSERT_EQ(dets.size(), 1u);
  const double c = dets[0].confidence;

  Config at;
  at.confidence_threshold = c;
  Session s = scanning_for_chair(at);
  handle_event(s, event::FramePose{p});
  EXPECT_EQ(tag_of(s.state), StateTag::Scanning) << "confidence equal to the threshold must not fire";

  Config below;
  below.confidence_threshold = std::nextafter(c, 0.0);
  Session t = scanning_for_chair(below);
  handle_event(t, event::FramePose{p});
  EXPECT_EQ(tag_of(t.state), StateTag::Announcing);
}

TEST(Scan, DefaultGateOnFixturePoses) {
  Session s = scanning_for_chair();
  handle_event(s, event::FramePose{pose_at(0.3, 0.3, 70)}); // chair at 0.15
  EXPECT_EQ(tag_of(s.state), StateTag::Scanning);
  const Step step = handle_event(s, event::FramePose{pose_at(0.3, 0.3, 35.3)}); // 0.41
  EXPECT_EQ(tag_of(s.state), StateTag::Announcing);
  EXPECT_EQ(count_earcons(step, EarconKind::FoundPause), 1u);
  ASSERT_EQ(spoken(step).size(), 1u);
  const auto loc = parse_announcement(spoken(step)[0]);
  ASSERT_TRUE(loc);
  EXPECT_EQ(loc->label, "office chair");
  EXPECT_EQ(loc->hour, ClockHour(11));
  EXPECT_NEAR(loc->distance_m, 2.6, 0.1);
}

TEST(Scan, RespecifyMidScan) {
  Session s = scanning_for_chair();
  const Step step = handle_event(s, event::Utterance{"find the desk"});
  EXPECT_EQ(tag_of(s.state), StateTag::ConfirmTarget);
  EXPECT_EQ(spoken(step), std::vector<std::string>{"You want to find desk, please confirm."});
}

TEST(Flow, BranchesAndQueries) {
  Session s = scanning_for_chair();
  handle_event(s, event::FramePose{pose_at(0.3, 0.3, 35.3)});
  const auto kf = std::get<state::Announcing>(s.state).keyframe;
  EXPECT_TRUE(tick(s, 1.0).effects.empty());
  EXPECT_EQ(tag_of(s.state), StateTag::Announcing);

  handle_event(s, event::ButtonA{});
  EXPECT_EQ(tag_of(s.state), StateTag::BranchSelect);
  Step step = handle_event(s, event::ButtonA{});
  EXPECT_EQ(tag_of(s.state), StateTag::Navigating);
  const auto *q = find_effect<effect::QueryFeedback>(step);
  ASSERT_TRUE(q);
  EXPECT_EQ(q->kind, FeedbackKind::RoutePlan);
  EXPECT_EQ(q->request.keyframe_ref, kf->id);
  EXPECT_EQ(q->request.user_prompt, build_route_prompt("office chair"));
  EXPECT_EQ(q->request.system_prompt, PromptTemplate::builtin().system);

  // Later queries use the current frame.
  const CameraPose moved = pose_at(1.0, 0.8, 40);
  handle_event(s, event::FramePose{moved});
  step = handle_event(s, event::ButtonA{});
  q = find_effect<effect::QueryFeedback>(step);
  ASSERT_TRUE(q);
  EXPECT_EQ(q->request.keyframe_ref.rfind("live:", 0), 0u);
  EXPECT_EQ(q->pose, moved);

  step = handle_event(s, event::ButtonB{});
  q = find_effect<effect::QueryFeedback>(step);
  ASSERT_TRUE(q);
  EXPECT_EQ(q->kind, FeedbackKind::SceneDescription);
  EXPECT_EQ(tag_of(s.state), StateTag::Navigating);
}

TEST(Flow, RoutePlanResultGetsReminder) {
  Session s = scanning_for_chair();
  handle_event(s, event::FramePose{pose_at(0.3, 0.3, 35.3)});
  handle_event(s, event::ButtonA{});
  const Step step = handle_event(s, event::ButtonA{});
  const auto id = find_effect<effect::QueryFeedback>(step)->request_id;
  const Step result = handle_event(s, event::FeedbackResult{id, "Walk four steps.", true});
  EXPECT_EQ(spoken(result), std::vector<std::string>{
                                "Please align your body with the direction of your head. Walk four steps."});
  // Answered ids are gone.
  const Step again = handle_event(s, event::FeedbackResult{id, "Late.", true});
  EXPECT_TRUE(spoken(again).empty());
}

TEST(Flow, PerceptionAndDialogue) {
  Session s = scanning_for_chair();
  handle_event(s, event::FramePose{pose_at(0.3, 0.3, 35.3)});
  handle_event(s, event::ButtonA{});
  handle_event(s, event::ButtonB{});
  EXPECT_EQ(tag_of(s.state), StateTag::Perceiving);
  const auto *q = find_effect<effect::QueryFeedback>(handle_event(s, event::ButtonA{}));
  ASSERT_TRUE(q);
  EXPECT_EQ(q->request.user_prompt, build_scene_prompt());
  handle_event(s, event::ButtonB{});
  EXPECT_EQ(tag_of(s.state), StateTag::OpenDialogue);
  Step step = handle_event(s, event::Question{"What color is it?"});
  q = find_effect<effect::QueryFeedback>(step);
  ASSERT_TRUE(q);
  EXPECT_EQ(q->kind, FeedbackKind::Answer);
  handle_event(s, event::FeedbackResult{q->request_id, "Black.", true});
  step = handle_event(s, event::Question{"What is it made of?"});
  q = find_effect<effect::QueryFeedback>(step);
  ASSERT_TRUE(q);
  ASSERT_EQ(q->request.history.size(), 1u);
  EXPECT_EQ(q->request.history[0], (DialogueTurn{"What color is it?", "Black."}));
  const Step failed = handle_event(s, event::FeedbackResult{q->request_id, "timeout", false});
  EXPECT_EQ(spoken(failed), std::vector<std::string>{"Sorry, I could not get an answer. Please try again."});
}

TEST(Flow, IllegalEventsAreLoggedNoOps) {
  Session s = office_session();
  const Session before = s;
  const Step step = handle_event(s, event::ButtonA{});
  EXPECT_EQ(tag_of(s.state), StateTag::AwaitTarget);
  const auto *l = find_effect<effect::Log>(step);
  ASSERT_TRUE(l);
  EXPECT_EQ(l->record.at("kind"), "ignored");
  EXPECT_EQ(s.now_us, before.now_us);
  EXPECT_EQ(tag_of(handle_event(s, event::Tick{-1}).effects.empty() ? s.state : s.state), StateTag::AwaitTarget);
}

TEST(Flow, ApplyEventIsPure) {
  const Session s = scanning_for_chair();
  const auto [a, sa] = apply_event(s, event::FramePose{pose_at(0.3, 0.3, 35.3)});
  const auto [b, sb] = apply_event(s, event::FramePose{pose_at(0.3, 0.3, 35.3)});
  EXPECT_EQ(tag_of(s.state), StateTag::Scanning);
  ASSERT_EQ(sa.effects.size(), sb.effects.size());
  for (std::size_t i = 0; i < sa.effects.size(); ++i) EXPECT_EQ(effect_to_json(sa.effects[i]), effect_to_json(sb.effects[i]));
}

TEST(Legality, FindReachesConfirmFromEveryState) {
  for (auto tag : kAllStateTags) EXPECT_TRUE(is_legal_transition(tag, "find", StateTag::ConfirmTarget));
  EXPECT_FALSE(is_legal_transition(StateTag::AwaitTarget, "button_a", StateTag::Scanning));
  EXPECT_EQ(transition_event_name(event::Utterance{"Find it"}), "find");
  EXPECT_EQ(transition_event_name(event::Utterance{"hello"}), "utterance");
}

TEST(Legality, FuzzedSequencesStayInTable) {
  const auto stats = fuzz_sessions(office(), 1000, 30, 99);
  EXPECT_EQ(stats.violations, 0u) << stats.first_violation;
  EXPECT_GT(stats.keyframes, 10u);
}

TEST(Events, JsonRoundTrip) {
  const CameraPose p = pose_at(1, 2, 3);
  const std::vector<Event> events{event::Tick{0.5},          event::FramePose{p},  event::Utterance{"find x"},
                                  event::ButtonA{},          event::ButtonB{},     event::Question{"why?"},
                                  event::FeedbackResult{"q1", "ok", false}};
  for (const auto &e : events) EXPECT_EQ(event_from_json(event_to_json(e)), e) << event_to_json(e).dump();
  EXPECT_EQ(std::get<event::FramePose>(event_from_json(Json{{"type", "frame_pose"}, {"pose", {{"heading_deg", 90}}}}, p))
                .pose.position.x,
            1);
  EXPECT_THROW(event_from_json(Json{{"type", "jump"}}), Error);
}

TEST(Effects, JsonRoundTrip) {
  effect::QueryFeedback q;
  q.request_id = "q1";
  q.kind = FeedbackKind::Answer;
  q.request = {"sys", "user", "kf1", {{"a", "b"}}};
  q.target = "desk";
  q.question = "a";
  const std::vector<Effect> effects{effect::Speak{"hi"}, effect::Earcon{EarconKind::InitBeep},
                                    effect::ReinitDetector{Vocabulary({"a", "b"})}, q,
                                    effect::Log{Json{{"kind", "x"}}}};
  for (const auto &e : effects) {
    const Json j = effect_to_json(e);
    EXPECT_EQ(effect_to_json(effect_from_json(j)), j);
  }
}
