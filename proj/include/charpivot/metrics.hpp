#pragma once

// Word- and character-level BLEU, untranslated-word counting and length ratio.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "charpivot/text.hpp"

namespace charpivot {

inline constexpr int kMaxBleuOrder = 4;

/// Decomposable BLEU sufficient statistics; corpus statistics are the sum of
/// sentence statistics.
struct BleuStats {
  int max_n = kMaxBleuOrder;
  std::array<std::int64_t, kMaxBleuOrder> matches{};
  std::array<std::int64_t, kMaxBleuOrder> totals{};
  std::int64_t hyp_length = 0;
  std::int64_t ref_length = 0;

  BleuStats& operator+=(const BleuStats& other);
  BleuStats& operator-=(const BleuStats& other);
  friend bool operator==(const BleuStats&, const BleuStats&) = default;
};

BleuStats sentence_bleu_stats(const Sentence& hyp, const Sentence& ref, int max_n = kMaxBleuOrder);

/// Unsmoothed BLEU as a fraction in [0, 1]; zero if any precision is zero.
double bleu_from_stats(const BleuStats& stats);

/// Sentence BLEU with add-one smoothing of the n > 1 precisions, in [0, 1].
double smoothed_sentence_bleu(const BleuStats& stats);

struct BleuReport {
  double bleu = 0.0;  // percent
  std::vector<double> precisions;
  double brevity_penalty = 1.0;
  double length_ratio = 0.0;
  std::int64_t hyp_length = 0;
  std::int64_t ref_length = 0;
};

BleuReport report_from_stats(const BleuStats& stats);

BleuReport corpus_bleu(std::span<const Sentence> hyps, std::span<const Sentence> refs,
                       int max_n = kMaxBleuOrder);

/// BLEU over characters of both sides, space marker counted as a token. Each
/// sentence is framed by a marker at either end.
BleuReport char_bleu(std::span<const Sentence> hyps, std::span<const Sentence> refs,
                     const CharEncoding& enc = {});

struct OovReport {
  std::size_t untranslated = 0;
  std::size_t total_words = 0;

  /// Relative reduction in percent of untranslated words against a baseline.
  double reduction_vs(const OovReport& baseline) const;
  OovReport& operator+=(const OovReport& other);
};

/// Counts flagged output words. Throws std::invalid_argument when a sentence
/// carries no flags for its tokens.
OovReport count_untranslated(std::span<const MarkedSentence> hyps);

/// Total hypothesis words over total reference words. Throws on an empty
/// reference corpus.
double length_ratio(std::span<const Sentence> hyps, std::span<const Sentence> refs);

void write_report_text(std::ostream& out, const BleuReport& report, std::string_view label);
void write_report_records(std::ostream& out, const BleuReport& report, std::string_view prefix);

}  // namespace charpivot
