#pragma once

// Phrase-pair extraction from symmetrized alignments, four-feature scoring
// with lexical weights, significance pruning and table IO.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "charpivot/align.hpp"
#include "charpivot/text.hpp"

namespace charpivot {

/// Half-open source and target spans of one extracted phrase pair.
struct PhraseSpan {
  int src_begin = 0;
  int src_end = 0;
  int tgt_begin = 0;
  int tgt_end = 0;
  friend auto operator<=>(const PhraseSpan&, const PhraseSpan&) = default;
};

/// All alignment-consistent span pairs (at least one link inside, no link
/// crossing the span boundary) including unaligned-word extensions, each side
/// at most max_len tokens. Sorted.
std::vector<PhraseSpan> extract_phrases(const AlignmentMatrix& alignment, int max_len);

struct PhraseOccurrence {
  Sentence source;
  Sentence target;
  /// Links relative to the phrase spans.
  std::vector<std::pair<int, int>> links;
};

std::vector<PhraseOccurrence> extract(const Sentence& src, const Sentence& tgt, const AlignmentMatrix& alignment,
                                      int max_len);

struct PhraseScores {
  double phi_src_given_tgt = 1.0;
  double lex_src_given_tgt = 1.0;
  double phi_tgt_given_src = 1.0;
  double lex_tgt_given_src = 1.0;
};

struct PhrasePair {
  Sentence source;
  Sentence target;
  PhraseScores scores;
  /// Sentence-level counts used by significance pruning: pairs whose source
  /// side contains the source phrase, whose target side contains the target
  /// phrase, and both.
  std::uint64_t source_count = 0;
  std::uint64_t target_count = 0;
  std::uint64_t joint_count = 0;
};

class PhraseTable {
 public:
  explicit PhraseTable(int max_phrase_length = 7, std::uint64_t corpus_size = 0)
      : max_phrase_length_(max_phrase_length), corpus_size_(corpus_size) {}

  /// Throws std::invalid_argument on a duplicate (source, target) entry.
  void add(PhrasePair pair);
  /// Entries for a source phrase, nullptr if absent.
  const std::vector<PhrasePair>* find(const std::string& source_key) const;

  /// Number of distinct (source, target) entries.
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  std::size_t source_phrase_count() const { return entries_.size(); }
  int max_phrase_length() const { return max_phrase_length_; }
  std::uint64_t corpus_size() const { return corpus_size_; }
  void set_corpus_size(std::uint64_t n) { corpus_size_ = n; }

  /// Groups keyed by the space-joined source phrase, in key order.
  const std::map<std::string, std::vector<PhrasePair>>& groups() const { return entries_; }

  /// "src ||| tgt ||| phi(s|t) lex(s|t) phi(t|s) lex(t|s) ||| C(src) C(tgt) C(src,tgt)"
  void write(std::ostream& out) const;
  void write(const std::filesystem::path& path) const;
  static PhraseTable read(std::istream& in, std::uint64_t corpus_size = 0);
  static PhraseTable read(const std::filesystem::path& path, std::uint64_t corpus_size = 0);

 private:
  int max_phrase_length_;
  std::uint64_t corpus_size_;
  std::size_t size_ = 0;
  std::map<std::string, std::vector<PhrasePair>> entries_;
};

/// Relative-frequency lexical translation tables from word alignments:
/// first t(src | tgt), second t(tgt | src); unaligned words count against NULL.
std::pair<LexTable, LexTable> lexical_tables_from_alignments(const Bitext& bitext,
                                                            std::span<const AlignmentMatrix> alignments);

/// Lexical weight of `words` given `given`: product over words of the mean
/// w(word | aligned given-word), or w(word | NULL) when unaligned. `table`
/// is queried as table.prob(word, given_word); missing entries use `floor`.
/// `links` are (word index, given index).
double lexical_weight(const Sentence& words, const Sentence& given, const std::vector<std::pair<int, int>>& links,
                      const LexTable& table, double floor = 1e-7);

/// Relative-frequency phrase probabilities and, per pair, the highest lexical
/// weight over its occurrences. Sentence-level counts are left at zero.
PhraseTable score_phrases(std::span<const PhraseOccurrence> occurrences, const LexTable& src_given_tgt,
                          const LexTable& tgt_given_src, int max_phrase_length);

struct PhraseTableOptions {
  int max_phrase_length = 7;
  double lex_floor = 1e-7;
  int jobs = 1;
};

/// Extraction, scoring and sentence-level co-occurrence counts over a whole
/// aligned bitext. The table's corpus size is the number of sentence pairs.
PhraseTable build_phrase_table(const Bitext& bitext, std::span<const AlignmentMatrix> alignments,
                               const PhraseTableOptions& options);

/// Natural log of the one-sided Fisher exact test p-value P(X >= joint) for a
/// hypergeometric X with population `corpus_size`, `source_count` successes
/// and `target_count` draws.
double fisher_log_p_value(std::uint64_t joint, std::uint64_t source_count, std::uint64_t target_count,
                          std::uint64_t corpus_size);

/// -ln p threshold below which pairs are discarded: the p-value of a pair
/// seen once on each side and once together, plus epsilon.
double significance_threshold(std::uint64_t corpus_size, double epsilon);

/// Keeps pairs with -ln p strictly above the threshold. Throws
/// std::invalid_argument when the corpus size is smaller than a count.
PhraseTable prune_significance(const PhraseTable& table, double epsilon = 0.01);

inline std::size_t table_size(const PhraseTable& table) { return table.size(); }

}  // namespace charpivot
