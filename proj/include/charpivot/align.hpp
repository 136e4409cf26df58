#pragma once

// IBM Model 1 / Model 2 EM training, Viterbi alignment, grow-diag-final-and
// symmetrization and character n-gram link conversion.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "charpivot/text.hpp"
#include "charpivot/vocab.hpp"

namespace charpivot {

/// Links (source position, target position) of one sentence pair, kept sorted
/// and duplicate-free.
class AlignmentMatrix {
 public:
  AlignmentMatrix() = default;
  AlignmentMatrix(std::size_t src_len, std::size_t tgt_len) : src_len_(src_len), tgt_len_(tgt_len) {}

  /// Throws std::out_of_range for positions outside the sentence lengths.
  void add(int src, int tgt);
  bool contains(int src, int tgt) const;

  std::size_t src_len() const { return src_len_; }
  std::size_t tgt_len() const { return tgt_len_; }
  std::size_t size() const { return links_.size(); }
  bool empty() const { return links_.empty(); }
  const std::vector<std::pair<int, int>>& links() const { return links_; }

  AlignmentMatrix transposed() const;

  friend bool operator==(const AlignmentMatrix&, const AlignmentMatrix&) = default;

 private:
  std::size_t src_len_ = 0;
  std::size_t tgt_len_ = 0;
  std::vector<std::pair<int, int>> links_;
};

/// Lexical translation probabilities t(src | tgt), including the NULL target
/// token. Every target row is a distribution over source tokens.
class LexTable {
 public:
  static constexpr std::string_view kNull = "NULL";
  static constexpr std::uint32_t kNullId = 0;

  LexTable();

  /// Builds normalized rows from raw (source, target) counts.
  static LexTable from_counts(const std::vector<std::tuple<std::string, std::string, double>>& counts);

  double prob(std::string_view src, std::string_view tgt) const;
  /// Probability or `floor` when the entry is absent.
  double prob_or(std::string_view src, std::string_view tgt, double floor) const;

  std::optional<std::uint32_t> src_id(std::string_view token) const { return src_vocab_.find(token); }
  std::optional<std::uint32_t> tgt_id(std::string_view token) const { return tgt_vocab_.find(token); }
  double prob_ids(std::uint32_t src, std::uint32_t tgt) const;

  /// Sum of t(. | tgt) over all source tokens.
  double row_sum(std::string_view tgt) const;
  std::size_t size() const { return probs_.size(); }

  /// Lines "tgt src prob" sorted lexicographically.
  void dump(std::ostream& out) const;

  // Builder interface used by the EM trainer.
  std::uint32_t intern_src(std::string_view token) { return src_vocab_.intern(token); }
  std::uint32_t intern_tgt(std::string_view token) { return tgt_vocab_.intern(token); }
  void set_ids(std::uint32_t src, std::uint32_t tgt, double p) { probs_[key(src, tgt)] = p; }
  const Vocab& src_vocab() const { return src_vocab_; }
  const Vocab& tgt_vocab() const { return tgt_vocab_; }

 private:
  static std::uint64_t key(std::uint32_t src, std::uint32_t tgt) {
    return (static_cast<std::uint64_t>(tgt) << 32) | src;
  }

  Vocab src_vocab_;
  Vocab tgt_vocab_;
  std::unordered_map<std::uint64_t, double> probs_;
};

/// Model 2 alignment distribution. Instead of a full (i, j, l, m) table the
/// target position is scored by its offset from the diagonal, bucketed, and
/// normalized within each (source position, lengths) context.
class DistortionTable {
 public:
  static constexpr int kMaxOffset = 7;
  static constexpr int kBuckets = 2 * kMaxOffset + 2;  // bucket 0 is NULL

  DistortionTable() : weights_(kBuckets, 1.0) {}

  /// Bucket for target position tgt (0-based, -1 for NULL) given source
  /// position src (0-based) and both sentence lengths.
  static int bucket(int tgt, int src, int tgt_len, int src_len);

  /// q(tgt | src, tgt_len, src_len); tgt = -1 denotes NULL.
  double prob(int tgt, int src, int tgt_len, int src_len, bool use_null = true) const;

  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& weights() { return weights_; }

 private:
  std::vector<double> weights_;
};

enum class AlignModel { ibm1, ibm2 };

struct EmOptions {
  AlignModel model = AlignModel::ibm2;
  int ibm1_iterations = 5;
  int ibm2_iterations = 5;
  bool use_null = true;
  double floor = 1e-7;
  int jobs = 1;
};

struct AlignmentModel {
  LexTable lex;
  std::optional<DistortionTable> distortion;
  bool use_null = true;
  double floor = 1e-7;
  /// Corpus log-likelihood (natural log, alignment length term excluded) of
  /// the initial parameters and after every iteration, IBM-1 then IBM-2.
  std::vector<double> log_likelihood;
};

/// EM training of t(src | tgt) (and the Model 2 distortion when requested)
/// from uniform initialization. Throws std::invalid_argument on an empty
/// bitext or when no iterations are requested.
AlignmentModel em_train(const Bitext& bitext, const EmOptions& options = {});

/// Corpus log-likelihood of the bitext under a model; unseen entries use the
/// model floor.
double corpus_log_likelihood(const AlignmentModel& model, const Bitext& bitext);

/// Links every source position to its most probable target position, or
/// leaves it unlinked when NULL wins. Ties go to NULL, then the leftmost
/// target position.
AlignmentMatrix viterbi_align(const AlignmentModel& model, const Sentence& src, const Sentence& tgt);

/// grow-diag-final-and. `fwd` and `rev` are both indexed (source, target);
/// transpose a target-to-source alignment before passing it in.
AlignmentMatrix symmetrize_gdfa(const AlignmentMatrix& fwd, const AlignmentMatrix& rev);

/// Maps links over sliding-window n-gram tokens to links over characters.
/// Each n-gram stands for its initial character at the same position, so
/// coordinates and link count carry over unchanged.
AlignmentMatrix ngram_links_to_char_links(const AlignmentMatrix& ngram_alignment);

std::size_t alignment_point_count(std::span<const AlignmentMatrix> alignments);

struct AlignOptions {
  /// Character n-gram context for alignment; 1 aligns the tokens as given.
  int ngram_order = 1;
  EmOptions em;
  int jobs = 1;
};

struct CorpusAlignment {
  std::vector<AlignmentMatrix> alignments;
  AlignmentModel forward;
  AlignmentModel reverse;
};

/// Trains both directions, aligns every pair and symmetrizes. For character
/// bitexts pass char-encoded sentences and ngram_order > 1: the tokens are
/// n-gram encoded for training and the links reduced back to characters.
CorpusAlignment align_corpus(const Bitext& bitext, const AlignOptions& options);

// Pharaoh format: one line per pair, "i-j" links separated by spaces.
void write_alignments(std::ostream& out, std::span<const AlignmentMatrix> alignments);
/// Reads links; the lengths come from the bitext the alignments belong to.
std::vector<AlignmentMatrix> read_alignments(std::istream& in, const Bitext& bitext);

}  // namespace charpivot
