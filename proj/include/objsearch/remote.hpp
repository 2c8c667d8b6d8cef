#pragma once

#include "objsearch/feedback.hpp"
#include "objsearch/json.hpp"
#include "objsearch/vocab.hpp"

#include <string>

namespace objsearch {

struct Endpoint {
  std::string url; // http://host:port/path
  std::string token;
  double timeout_s = 10;
};

/// Replaces url/token with the named environment variables when set.
Endpoint endpoint_with_env(Endpoint base, const char *url_var, const char *token_var);

inline constexpr const char *kFeedbackEndpointEnv = "OBJSEARCH_FEEDBACK_ENDPOINT";
inline constexpr const char *kFeedbackTokenEnv = "OBJSEARCH_FEEDBACK_TOKEN";
inline constexpr const char *kEmbeddingEndpointEnv = "OBJSEARCH_EMBEDDING_ENDPOINT";
inline constexpr const char *kEmbeddingTokenEnv = "OBJSEARCH_EMBEDDING_TOKEN";

/// {"system", "user", "keyframe_id", "history": [[q, a], ...]}
Json feedback_request_to_json(const MLLMRequest &request);
MLLMRequest feedback_request_from_json(const Json &j);

/// POSTs each request to a multimodal model gateway.
class RemoteFeedbackBackend final : public FeedbackBackend {
public:
  explicit RemoteFeedbackBackend(Endpoint endpoint);
  MLLMResponse respond(const FeedbackQuery &query) override;

private:
  Endpoint endpoint_;
};

/// POSTs {"text"} and expects {"dim", "values"}. A non-zero `dim` pins the
/// expected vector width.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
  RemoteEmbeddingProvider(Endpoint endpoint, std::size_t dim = 0);
  EmbeddingVector embed(std::string_view text) const override;

private:
  Endpoint endpoint_;
  std::size_t dim_;
};

} // namespace objsearch
