#pragma once

// Phrase-based stack decoder with recombination lattice and exact k-best
// extraction.

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "charpivot/features.hpp"
#include "charpivot/lm.hpp"
#include "charpivot/phrase_table.hpp"
#include "charpivot/text.hpp"

namespace charpivot {

struct DecoderOptions {
  /// Hypotheses kept per stack. Must be >= 1.
  std::size_t beam = 100;
  /// Maximum jump between consecutive phrases; 0 is monotone, negative is
  /// unlimited.
  int distortion_limit = 6;
  std::size_t k = 1;
  /// Return distinct surfaces only.
  bool unique = false;
  /// Translation options kept per source span, best first.
  std::size_t table_limit = 20;
  /// Derivations examined while collecting unique surfaces; 0 chooses
  /// max(1000, 200 k).
  std::size_t max_derivations = 0;
};

struct Hypothesis {
  Sentence tokens;
  /// Per output token: passed through untranslated.
  std::vector<bool> oov;
  FeatureVector features;
  double total = 0.0;
  /// Source spans [begin, end) in output order.
  std::vector<std::pair<int, int>> segments;

  MarkedSentence marked() const { return {tokens, oov}; }
  std::string surface() const;
};

struct KBestList {
  std::vector<Hypothesis> hyps;
  bool unique = false;
};

/// Decodes one sentence. Missing decoder feature weights, k = 0 or beam = 0
/// raise std::invalid_argument. Input tokens without a single-token table
/// entry are offered as untranslated pass-through.
KBestList decode(const Sentence& input, const PhraseTable& table, const NgramLM& lm, const FeatureWeights& weights,
                 const DecoderOptions& options);

/// Decodes sentences in parallel; results are in input order.
std::vector<KBestList> decode_corpus(std::span<const Sentence> inputs, const PhraseTable& table, const NgramLM& lm,
                                     const FeatureWeights& weights, const DecoderOptions& options, int jobs = 1);

/// "sent_id ||| surface ||| name=value ... ||| total", ids counted from first_id.
void write_kbest(std::ostream& out, std::span<const KBestList> lists, std::size_t first_id = 0);
/// Tokens separated by spaces, untranslated ones written as ⟦token⟧.
std::string mark_untranslated(const MarkedSentence& sentence);
/// Inverse of mark_untranslated.
MarkedSentence parse_marked(std::string_view line);

/// Parallel markup channel: "sent_id ||| surface" with untranslated tokens
/// written as ⟦token⟧. Lines correspond one to one with write_kbest.
void write_kbest_markup(std::ostream& out, std::span<const KBestList> lists, std::size_t first_id = 0);
/// Reads a k-best file; sentence ids must be non-decreasing and start at
/// first_id. Missing ids yield empty lists. When a markup stream is given
/// the OOV flags are restored from it.
std::vector<KBestList> read_kbest(std::istream& in, std::istream* markup = nullptr, std::size_t first_id = 0);

}  // namespace charpivot
