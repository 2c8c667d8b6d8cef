#include "objsearch/vocab.hpp"

#include "objsearch/error.hpp"

#include <cctype>
#include <cmath>
#include <set>

namespace objsearch {

std::string fold_case(std::string_view text) {
  std::string out(text);
  for (char &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view text) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return std::string(text.substr(b, e - b));
}

Vocabulary::Vocabulary(std::vector<std::string> labels) : labels_(std::move(labels)) {
  std::set<std::string> folded;
  for (const auto &l : labels_) {
    if (trim(l).empty()) throw InvariantError("vocabulary: empty label");
    if (!folded.insert(fold_case(l)).second) {
      throw InvariantError("vocabulary: duplicate label '" + l + "'");
    }
  }
}

bool Vocabulary::contains(std::string_view label) const {
  const std::string needle = fold_case(label);
  for (const auto &l : labels_) {
    if (fold_case(l) == needle) return true;
  }
  return false;
}

Vocabulary extend_vocab(const Vocabulary &vocab, std::string_view target) {
  std::string t = trim(target);
  if (t.empty()) throw PreconditionError("extend_vocab: empty target");
  if (vocab.contains(t)) return vocab;
  auto labels = vocab.labels();
  labels.push_back(std::move(t));
  return Vocabulary(std::move(labels));
}

namespace {

bool word_boundary_after(std::string_view s, std::size_t n) {
  return s.size() == n || !std::isalpha(static_cast<unsigned char>(s[n]));
}

std::string_view drop_leading_word(std::string_view s, std::string_view word) {
  if (s.substr(0, word.size()) == word && word_boundary_after(s, word.size())) {
    return s.substr(word.size());
  }
  return s;
}

std::string_view skip_separators(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && !std::isalnum(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

} // namespace

bool is_find_command(std::string_view utterance) {
  const std::string t = fold_case(trim(utterance));
  return t.substr(0, 4) == "find" && word_boundary_after(t, 4);
}

TargetQuery normalize_query(std::string_view utterance) {
  const std::string folded = fold_case(trim(utterance));
  std::string_view rest = folded;
  if (const auto after = drop_leading_word(rest, "find"); after.size() != rest.size()) {
    rest = skip_separators(after);
  }
  for (std::string_view article : {"the", "an", "a"}) {
    if (const auto after = drop_leading_word(rest, article); after.size() != rest.size()) {
      rest = after;
      break;
    }
  }
  std::string target = trim(rest);
  if (target.empty()) {
    throw PreconditionError("no target in utterance '" + std::string(utterance) + "'");
  }
  return {std::string(utterance), std::move(target)};
}

std::optional<std::string> substring_match(const TargetQuery &query, const Vocabulary &vocab) {
  const std::string haystack = fold_case(query.target);
  const std::string *best = nullptr;
  for (const auto &label : vocab.labels()) {
    if (haystack.find(fold_case(label)) == std::string::npos) continue;
    if (best == nullptr || label.size() > best->size()) best = &label;
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

double cosine(const EmbeddingVector &a, const EmbeddingVector &b) {
  if (a.dim() != b.dim()) throw PreconditionError("cosine: dimension mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    ab += a.values[i] * b.values[i];
    aa += a.values[i] * a.values[i];
    bb += b.values[i] * b.values[i];
  }
  if (aa == 0 || bb == 0) throw PreconditionError("cosine: zero vector");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

EmbeddingVector TrigramEmbedder::embed(std::string_view text) const {
  const std::string body = fold_case(trim(text));
  if (body.empty()) throw ProviderError(std::string(text), "embed: empty text");
  const std::string padded = "^" + body + "$";
  EmbeddingVector v;
  v.values.assign(kDim, 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    // FNV-1a over the trigram bytes.
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t k = i; k < i + 3; ++k) {
      h ^= static_cast<unsigned char>(padded[k]);
      h *= 1099511628211ULL;
    }
    v.values[h % kDim] += 1.0;
  }
  return v;
}

std::string outcome_kind(const MatchOutcome &outcome) {
  switch (outcome.index()) {
  case 0: return "match";
  case 1: return "related";
  default: return "unrelated";
  }
}

MatchOutcome classify_target(const TargetQuery &query, const Vocabulary &vocab,
                             const EmbeddingProvider &provider, double threshold) {
  if (vocab.empty()) throw PreconditionError("classify_target: empty vocabulary");
  if (!(threshold > 0 && threshold <= 1)) {
    throw PreconditionError("classify_target: threshold must lie in (0, 1]");
  }
  if (auto label = substring_match(query, vocab)) return Match{*label};

  const EmbeddingVector target = provider.embed(query.target);
  const std::string *best_label = nullptr;
  double best = -2.0;
  for (const auto &label : vocab.labels()) {
    const double score = cosine(target, provider.embed(label));
    if (score > best) {
      best = score;
      best_label = &label;
    }
  }
  if (best >= threshold) return Related{*best_label, std::min(best, 1.0)};
  return Unrelated{};
}

} // namespace objsearch
