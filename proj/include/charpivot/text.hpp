#pragma once

// Sentence and bitext representation, character / character n-gram encoding,
// corpus cleaning filters and deterministic subsetting.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace charpivot {

/// Whitespace-free tokens: words at word level, characters or character
/// n-grams at character level.
using Sentence = std::vector<std::string>;

struct SentencePair {
  Sentence source;
  Sentence target;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

struct Bitext {
  std::string source_lang;
  std::string target_lang;
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  std::vector<Sentence> source_side() const;
  std::vector<Sentence> target_side() const;
  /// Same pairs with the two sides (and language tags) exchanged.
  Bitext reversed() const;
};

/// Tokens of an output sentence together with per-token untranslated flags.
struct MarkedSentence {
  Sentence tokens;
  std::vector<bool> oov;
};

enum class Level { word, character };

std::string_view to_string(Level level);
Level parse_level(std::string_view text);

struct CharEncoding {
  std::string space_marker = "▁";
  int ngram_order = 1;
};

/// Splits a UTF-8 string into code points. Throws std::invalid_argument on
/// malformed input.
std::vector<std::string> utf8_chars(std::string_view text);

/// Characters of the detokenized sentence, inter-word spaces replaced by the
/// marker. Throws std::invalid_argument if a token contains the marker.
Sentence char_encode(const Sentence& words, const CharEncoding& enc = {});

/// Inverse of char_encode; empty words produced by leading, trailing or
/// doubled markers are dropped.
Sentence char_decode(const Sentence& chars, const CharEncoding& enc = {});

/// char_decode that also maps per-character flags to per-word flags: a word is
/// flagged when any of its characters is.
MarkedSentence char_decode_marked(const MarkedSentence& chars, const CharEncoding& enc = {});

/// Sliding-window character n-grams, truncated at the sentence end so token
/// count and positions are preserved.
Sentence ngram_encode(const Sentence& chars, int n);

std::size_t vocabulary_size(std::span<const Sentence> corpus);

struct SameLanguageDecision {
  bool keep = true;
  double bleu = 0.0;  // fraction in [0, 1]
};

/// Corpus word-BLEU of the source side against the target side. A document
/// pair that scores above the threshold is most likely the same language on
/// both sides and is dropped.
SameLanguageDecision filter_same_language(const Bitext& document, double threshold = 0.7);

struct ForbiddenChars {
  std::set<std::string> source;
  std::set<std::string> target;
};

/// Letters unique to one of the Macedonian and Bulgarian Cyrillic alphabets.
std::set<std::string> macedonian_specific_letters();
std::set<std::string> bulgarian_specific_letters();

/// Filter for a Macedonian-Bulgarian bitext: letters specific to the other
/// language are forbidden on each side.
ForbiddenChars macedonian_bulgarian_filter(bool source_is_macedonian);

/// Drops pairs where either side contains a forbidden character. Retained
/// pairs are copied unchanged.
Bitext filter_charset(const Bitext& bitext, const ForbiddenChars& forbidden);

/// Drops pairs with an empty side.
Bitext remove_empty_pairs(const Bitext& bitext);

/// First k pairs of a seeded shuffle. Subsets drawn with the same seed are
/// nested. Throws std::invalid_argument if k exceeds the corpus size.
Bitext subset(const Bitext& bitext, std::size_t k, std::uint64_t seed);

// --- plain-text IO: one sentence per line, tokens separated by spaces.

std::vector<Sentence> read_sentences(std::istream& in);
std::vector<Sentence> read_sentences(const std::filesystem::path& path);
void write_sentences(std::ostream& out, std::span<const Sentence> sentences);
void write_sentences(const std::filesystem::path& path, std::span<const Sentence> sentences);

Bitext read_bitext(const std::filesystem::path& source, const std::filesystem::path& target,
                   std::string source_lang = "src", std::string target_lang = "tgt");
void write_bitext(const Bitext& bitext, const std::filesystem::path& source,
                  const std::filesystem::path& target);

}  // namespace charpivot
