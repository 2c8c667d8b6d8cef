#include "objsearch/remote.hpp"

#include "objsearch/error.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>

namespace objsearch {

namespace {

struct Target {
  std::string origin; // scheme://host:port
  std::string path;
};

Target split_url(const std::string &url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
    throw PreconditionError("endpoint '" + url + "' must be an http:// URL");
  }
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

/// POSTs a JSON body and returns the parsed JSON reply. Errors carry `subject`.
Json post_json(const Endpoint &ep, const Json &body, const std::string &subject,
               const httplib::Headers &extra = {}) {
  if (ep.url.empty()) throw ProviderError(subject, "no endpoint configured");
  Target target;
  try {
    target = split_url(ep.url);
  } catch (const PreconditionError &e) {
    throw ProviderError(subject, e.what());
  }
  httplib::Client client(target.origin);
  const auto secs = static_cast<time_t>(ep.timeout_s);
  const auto usecs = static_cast<time_t>((ep.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers = extra;
  if (!ep.token.empty()) headers.emplace("Authorization", "Bearer " + ep.token);
  const auto res = client.Post(target.path, headers, body.dump(), "application/json");
  if (!res) throw ProviderError(subject, "transport error: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403) {
    throw ProviderError(subject, "authorization rejected (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status != 200) throw ProviderError(subject, "HTTP " + std::to_string(res->status));
  try {
    return parse_json(res->body, "response");
  } catch (const ParseError &e) {
    throw ProviderError(subject, e.what());
  }
}

} // namespace

Endpoint endpoint_with_env(Endpoint base, const char *url_var, const char *token_var) {
  if (const char *v = std::getenv(url_var); v != nullptr && *v != '\0') base.url = v;
  if (const char *v = std::getenv(token_var); v != nullptr && *v != '\0') base.token = v;
  return base;
}

Json feedback_request_to_json(const MLLMRequest &r) {
  Json history = Json::array();
  for (const auto &[q, a] : r.history) history.push_back({q, a});
  return Json{{"system", r.system_prompt},
              {"user", r.user_prompt},
              {"keyframe_id", r.keyframe_ref},
              {"history", history}};
}

MLLMRequest feedback_request_from_json(const Json &j) {
  namespace jf = json_field;
  MLLMRequest r;
  r.system_prompt = jf::string(j, "system", "request");
  r.user_prompt = jf::string(j, "user", "request");
  r.keyframe_ref = jf::string(j, "keyframe_id", "request");
  for (const auto &turn : jf::array(j, "history", "request")) {
    if (!turn.is_array() || turn.size() != 2 || !turn[0].is_string() || !turn[1].is_string()) {
      throw ParseError("request.history: expected [question, answer] pairs");
    }
    r.history.emplace_back(turn[0].get<std::string>(), turn[1].get<std::string>());
  }
  return r;
}

RemoteFeedbackBackend::RemoteFeedbackBackend(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}

MLLMResponse RemoteFeedbackBackend::respond(const FeedbackQuery &query) {
  const Json reply = post_json(endpoint_, feedback_request_to_json(query.request), query.request_id,
                               {{"X-Request-Id", query.request_id}});
  if (!reply.is_object() || !reply.contains("text") || !reply.at("text").is_string()) {
    throw ProviderError(query.request_id, "response lacks a 'text' string");
  }
  MLLMResponse r;
  r.text = reply.at("text").get<std::string>();
  r.word_count = count_words(r.text);
  return r;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(Endpoint endpoint, std::size_t dim)
    : endpoint_(std::move(endpoint)), dim_(dim) {}

EmbeddingVector RemoteEmbeddingProvider::embed(std::string_view text) const {
  const std::string subject(text);
  const Json reply = post_json(endpoint_, Json{{"text", trim(text)}}, subject);
  if (!reply.is_object() || !reply.contains("values") || !reply.at("values").is_array()) {
    throw ProviderError(subject, "response lacks a 'values' array");
  }
  EmbeddingVector v;
  for (const auto &x : reply.at("values")) {
    if (!x.is_number()) throw ProviderError(subject, "non-numeric embedding value");
    v.values.push_back(x.get<double>());
  }
  if (reply.contains("dim") && (!reply.at("dim").is_number_unsigned() ||
                                reply.at("dim").get<std::size_t>() != v.dim())) {
    throw ProviderError(subject, "'dim' disagrees with the number of values");
  }
  if (v.dim() == 0 || (dim_ != 0 && v.dim() != dim_)) {
    throw ProviderError(subject, "unexpected embedding dimension " + std::to_string(v.dim()));
  }
  return v;
}

} // namespace objsearch
