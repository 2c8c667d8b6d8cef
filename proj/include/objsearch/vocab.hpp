#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace objsearch {

/// Lowercases ASCII letters.
std::string fold_case(std::string_view text);
std::string trim(std::string_view text);

/// Ordered detector class list. Labels are non-empty and unique after
/// case folding.
class Vocabulary {
public:
  Vocabulary() = default;
  /// Throws InvariantError on empty or case-folded duplicate labels.
  explicit Vocabulary(std::vector<std::string> labels);

  const std::vector<std::string> &labels() const { return labels_; }
  bool empty() const { return labels_.empty(); }
  std::size_t size() const { return labels_.size(); }
  bool contains(std::string_view label) const;

  bool operator==(const Vocabulary &) const = default;

private:
  std::vector<std::string> labels_;
};

/// Appends `target` unless already present (case-folded).
Vocabulary extend_vocab(const Vocabulary &vocab, std::string_view target);

struct TargetQuery {
  std::string raw_utterance;
  std::string target;

  bool operator==(const TargetQuery &) const = default;
};

/// Lowercase, trim, drop a leading "find" and a leading article.
/// Throws PreconditionError when nothing is left.
TargetQuery normalize_query(std::string_view utterance);

/// True when the utterance opens with the word "find".
bool is_find_command(std::string_view utterance);

/// Longest vocabulary label occurring inside the target; vocabulary order
/// breaks length ties.
std::optional<std::string> substring_match(const TargetQuery &query, const Vocabulary &vocab);

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector &) const = default;
};

double cosine(const EmbeddingVector &a, const EmbeddingVector &b);

class EmbeddingProvider {
public:
  virtual ~EmbeddingProvider() = default;
  /// Must be safe to call concurrently. Failures throw ProviderError.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

/// Hermetic provider: character trigrams of the trimmed, case-folded text
/// with boundary markers, hashed into a fixed-width count vector.
class TrigramEmbedder final : public EmbeddingProvider {
public:
  static constexpr std::size_t kDim = 256;
  EmbeddingVector embed(std::string_view text) const override;
};

struct Match {
  std::string label;
  bool operator==(const Match &) const = default;
};
struct Related {
  std::string label;
  double score = 0;
  bool operator==(const Related &) const = default;
};
struct Unrelated {
  bool operator==(const Unrelated &) const = default;
};

using MatchOutcome = std::variant<Match, Related, Unrelated>;

std::string outcome_kind(const MatchOutcome &outcome);

inline constexpr double kDefaultSimilarityThreshold = 0.8;

/// Substring match first; otherwise the best cosine against each label,
/// Related when it reaches `threshold` (inclusive).
MatchOutcome classify_target(const TargetQuery &query, const Vocabulary &vocab,
                             const EmbeddingProvider &provider,
                             double threshold = kDefaultSimilarityThreshold);

} // namespace objsearch
