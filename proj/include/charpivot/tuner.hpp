#pragma once

// Log-linear weight tuning against word-level BLEU: MERT with exact line
// search and PRO pairwise ranking.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "charpivot/features.hpp"
#include "charpivot/metrics.hpp"
#include "charpivot/text.hpp"

namespace charpivot {

struct TuningCandidate {
  /// Word-level output.
  Sentence surface;
  FeatureVector features;
  BleuStats stats;
};

struct TuningInstance {
  Sentence reference;
  std::vector<TuningCandidate> candidates;
};

/// BLEU statistics of a hypothesis against a word-level reference. Character
/// hypotheses are detokenized first.
BleuStats word_bleu_objective(const Sentence& hyp, const Sentence& ref, Level level, const CharEncoding& enc = {});

/// Builds an instance and fills in candidate statistics against the reference.
TuningInstance make_instance(const Sentence& reference, std::vector<TuningCandidate> candidates);

/// Index of the highest-scoring candidate; features without a weight count as
/// zero and ties go to the earlier candidate. Throws on an empty list.
std::size_t select(const TuningInstance& instance, const FeatureWeights& weights);

/// Summed statistics of the selected candidates.
BleuStats selected_stats(std::span<const TuningInstance> instances, const FeatureWeights& weights);

/// Corpus BLEU of the selected candidates as a fraction.
double selected_bleu(std::span<const TuningInstance> instances, const FeatureWeights& weights);

struct LineSearchResult {
  /// Step along the direction inside the best interval.
  double gamma = 0.0;
  /// Corpus BLEU (fraction) on that interval.
  double bleu = 0.0;
  /// Interval bounds; infinite at the ends of the line.
  double lower = 0.0;
  double upper = 0.0;
};

/// Exact maximization of corpus BLEU over weights origin + gamma * direction,
/// computed from the upper envelopes of the candidate score lines. The leftmost
/// best interval is returned.
LineSearchResult line_search(std::span<const TuningInstance> instances, const FeatureWeights& origin,
                             const FeatureWeights& direction);

struct MertOptions {
  int restarts = 20;
  int random_directions = 20;
  int max_iterations = 100;
  std::uint64_t seed = 1;
  int jobs = 1;
};

/// Och's MERT. Runs from w0 and from `restarts` random points; each
/// iteration line-searches the coordinate and random directions and takes the
/// best improving step. Returns the best weights found; never worse than w0.
FeatureWeights mert(std::span<const TuningInstance> instances, const FeatureWeights& w0, const MertOptions& options = {});

struct ProOptions {
  std::size_t samples = 5000;
  std::size_t keep = 50;
  double min_diff = 0.05;
  double l2 = 1e-3;
  int iterations = 200;
  /// Weight of the new classifier when interpolating with the previous weights.
  /// The classifier is first rescaled to the L1 norm of the previous weights.
  double interpolation = 0.1;
  std::uint64_t seed = 1;
};

/// Regularized logistic loss of ranking pairs, mean over pairs, each pair
/// given as the feature difference better - worse:
///   L(w) = mean log(1 + exp(-w.x)) + l2 / 2 |w|^2.
/// Writes the gradient when requested.
double pro_loss(std::span<const std::vector<double>> diffs, std::span<const double> w, double l2,
                std::vector<double>* gradient = nullptr);

struct ProResult {
  FeatureWeights weights;
  FeatureWeights classifier;
  std::size_t pairs = 0;
  /// Fraction of training pairs ranked correctly by the classifier.
  double accuracy = 0.0;
  /// Interpolation weight actually used: options.interpolation, doubled while
  /// the accumulated lists show no BLEU gain.
  double interpolation = 0.0;
  /// False when w0 was kept: no pairs survived sampling, or the update would
  /// lower BLEU on the instances.
  bool updated = false;
};

/// Hopkins and May pairwise ranking optimization over the instances.
ProResult pro(std::span<const TuningInstance> instances, const FeatureWeights& w0, const ProOptions& options = {});

enum class TuneMethod { mert, pro };
TuneMethod parse_tune_method(std::string_view text);

struct TuneOptions {
  TuneMethod method = TuneMethod::mert;
  int outer_iterations = 10;
  /// Stop once decoded dev BLEU (points) improves by less than this.
  double min_improvement = 0.01;
  MertOptions mert;
  ProOptions pro;
};

/// Produces one candidate list per dev sentence under the given weights,
/// best first. Statistics need not be filled in.
using CandidateGenerator = std::function<std::vector<std::vector<TuningCandidate>>(const FeatureWeights&)>;

struct TuneStep {
  int iteration = 0;
  /// BLEU (points) of the decoded 1-best output under this step's weights.
  double dev_bleu = 0.0;
  std::size_t candidates = 0;
};

struct TuneResult {
  FeatureWeights weights;
  std::vector<TuneStep> trajectory;
  std::vector<TuningInstance> accumulated;
};

/// Alternates candidate generation and optimization, merging new candidates
/// into the accumulated lists without duplicates. Returns the weights with the
/// best decoded dev BLEU among those scoring at least as well as w0 on the
/// accumulated lists.
TuneResult tune_loop(std::span<const Sentence> references, const CandidateGenerator& generate, const FeatureWeights& w0,
                     const TuneOptions& options = {});

/// Tab-separated "iteration dev_bleu candidates" rows with a header.
void write_trajectory(std::ostream& out, std::span<const TuneStep> trajectory);

}  // namespace charpivot
