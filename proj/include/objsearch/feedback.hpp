#pragma once

#include "objsearch/localize.hpp"
#include "objsearch/scene.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace objsearch {

namespace prompts {

inline constexpr std::string_view kSystem =
    "You are an AI visual assistant, observing scenarios from the egocentric perspective of a "
    "user who is blind or visually impaired. The user will present various prompts regarding "
    "scene description, route planning, and open-ended questions. Responses should be concise and "
    "practical, not exceeding 100 words in length. Ensure that your tone reflects that of a visual "
    "AI assistant interpreting and responding to the scene. Craft your responses with "
    "consideration of the following perspectives: position, count, size, color, material, and "
    "shape.";

inline constexpr std::string_view kRoutePlanning =
    "I am a blind person. Please guide me on how to approach this {target_object} based on this "
    "picture. At the beginning of your response, always remind me to align my body with my "
    "head's direction.";

inline constexpr std::string_view kSceneDescription =
    "Please describe the scene. You need to provide the positional relationship between the "
    "items, and your answer should be brief.";

inline constexpr std::string_view kTargetSlot = "{target_object}";

/// Spoken before every route-planning answer.
inline constexpr std::string_view kAlignmentReminder =
    "Please align your body with the direction of your head.";

inline constexpr std::string_view kCannotTell = "I cannot tell from this view.";

} // namespace prompts

struct PromptTemplate {
  std::string system;
  std::string route_planning;
  std::string scene_description;

  static const PromptTemplate &builtin();
};

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

/// Route-planning prompt with the target substituted into the single slot.
std::string build_route_prompt(std::string_view target);
std::string build_scene_prompt();

enum class FeedbackKind { RoutePlan, SceneDescription, Answer };

std::string_view to_string(FeedbackKind kind);
FeedbackKind feedback_kind_from_string(std::string_view s);

using DialogueTurn = std::pair<std::string, std::string>; // question, answer

struct MLLMRequest {
  std::string system_prompt;
  std::string user_prompt;
  std::string keyframe_ref;
  std::vector<DialogueTurn> history;

  bool operator==(const MLLMRequest &) const = default;
};

struct MLLMResponse {
  std::string text;
  int word_count = 0;
};

int count_words(std::string_view text);

/// Drops whole trailing sentences until at most `limit` words remain.
std::string cap_words(std::string_view text, int limit = 100);

MLLMResponse make_response(std::string text);

/// Everything a backend may consult for one request.
struct FeedbackQuery {
  std::string request_id;
  FeedbackKind kind = FeedbackKind::SceneDescription;
  MLLMRequest request;
  std::string target;
  std::string question;
  CameraPose pose;
  const KeyFrame *focus = nullptr;
  const Scene *scene = nullptr;
  double step_length_m = 0.7;
};

class FeedbackBackend {
public:
  virtual ~FeedbackBackend() = default;
  /// Failures throw ProviderError carrying the request id.
  virtual MLLMResponse respond(const FeedbackQuery &query) = 0;
};

/// "one", "two", ... up to twenty, digits beyond.
std::string number_word(long n);

/// Egocentric phrase for a clock hour, e.g. 11 -> "slightly to your left".
std::string_view direction_phrase(ClockHour hour);
/// Same, in the "There is X ..." form (12 -> "in front of you").
std::string_view location_phrase(ClockHour hour);

/// Spatial relation of `subject` to `reference` in the viewer frame of
/// `pose`: "to the left of", "to the right of", "behind", "in front of",
/// or "on top of" when the subject rests on the reference.
std::string relation(const SceneObject &subject, const SceneObject &reference,
                     const CameraPose &pose);

/// The scene object a keyframe's detection refers to.
const SceneObject *focal_object(const Scene &scene, const KeyFrame &keyframe);

MLLMResponse mock_route_plan(const Scene &scene, const CameraPose &pose, const KeyFrame *keyframe,
                             std::string_view target, double step_length_m);

MLLMResponse mock_scene_description(const Scene &scene, const CameraPose &pose,
                                    const KeyFrame *keyframe);

MLLMResponse mock_answer(const Scene &scene, const KeyFrame *keyframe, std::string_view question);

/// Answers from simulator ground truth.
class MockFeedbackBackend final : public FeedbackBackend {
public:
  MLLMResponse respond(const FeedbackQuery &query) override;
};

} // namespace objsearch
