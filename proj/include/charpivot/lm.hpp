#pragma once

// Interpolated Kneser-Ney n-gram language model with incremental scoring.
// All probabilities are log10.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "charpivot/text.hpp"
#include "charpivot/vocab.hpp"

namespace charpivot {

inline constexpr std::string_view kSentenceStart = "<s>";
inline constexpr std::string_view kSentenceEnd = "</s>";
inline constexpr std::string_view kUnknown = "<unk>";

struct LmOptions {
  int order = 5;
  /// Wrap sentences in <s> ... </s>; the end-of-sentence event is predicted.
  bool sentence_boundaries = true;
  /// Reserve <unk> in the vocabulary; it receives only interpolated mass.
  bool unknown_token = true;
};

/// Scoring context. It identifies the longest suffix of the history that can
/// still influence a prediction, so equal states always extend identically.
struct LMState {
  std::uint32_t node = 0;
  friend bool operator==(const LMState&, const LMState&) = default;
};

class NgramLM {
 public:
  static constexpr double kImpossible = -99.0;

  /// Throws std::invalid_argument for an empty corpus or order outside [1, 10].
  static NgramLM train(std::span<const Sentence> corpus, const LmOptions& options);

  static NgramLM load_arpa(std::istream& in);
  static NgramLM load_arpa(const std::filesystem::path& path);
  void save_arpa(std::ostream& out) const;
  void save_arpa(const std::filesystem::path& path) const;

  int order() const { return order_; }
  bool sentence_boundaries() const { return boundaries_; }

  /// Word id for scoring; unknown tokens map to <unk> (or to an id with no
  /// unigram entry when the model has none).
  std::uint32_t word_id(std::string_view token) const;
  std::uint32_t end_id() const { return end_id_; }

  LMState begin_state() const;
  /// Conditional log10 probability of the word and the successor state.
  std::pair<LMState, double> extend_state(LMState state, std::string_view token) const;
  double extend(LMState& state, std::uint32_t word) const;
  /// log10 P(</s> | state), or 0 without sentence boundaries.
  double end_score(LMState state) const;

  /// Sentence log10 probability including the end-of-sentence event.
  double score(const Sentence& sentence) const;
  /// log10 P(word | context) for an explicit context (oldest token first).
  double log_prob(const Sentence& context, std::string_view word) const;
  /// Per-event perplexity, end-of-sentence events included.
  double perplexity(std::span<const Sentence> corpus) const;

  /// Tokens that can be predicted: training types, </s> and <unk>.
  std::vector<std::string> predictable_vocabulary() const;
  /// Tokens of the context a state stands for, oldest first.
  Sentence state_context(LMState state) const;
  std::size_t ngram_count(int n) const;

 private:
  struct Node {
    std::uint32_t word = 0;
    std::uint32_t parent = 0;  // n-gram without its last word
    std::uint32_t suffix = 0;  // n-gram without its first word
    std::uint16_t length = 0;
    bool has_children = false;
    double log_prob = kImpossible;
    double backoff = 0.0;
  };

  static std::uint64_t key(std::uint32_t node, std::uint32_t word) {
    return (static_cast<std::uint64_t>(node) << 32) | word;
  }
  std::uint32_t child(std::uint32_t node, std::uint32_t word) const;
  std::uint32_t add_child(std::uint32_t node, std::uint32_t word);
  void link_suffixes();
  LMState minimize(std::uint32_t node) const;

  int order_ = 1;
  bool boundaries_ = true;
  Vocab vocab_;
  std::uint32_t start_id_ = 0;
  std::uint32_t end_id_ = 0;
  std::uint32_t unk_id_ = 0;
  bool has_unk_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<std::uint64_t, std::uint32_t> children_;
};

}  // namespace charpivot
