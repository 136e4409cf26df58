#pragma once

// Pivot translation: cascades of two systems reranked over k x k candidates,
// ensembles of paths with global tuning, and synthetic bitexts.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "charpivot/system.hpp"
#include "charpivot/tuner.hpp"

namespace charpivot {

/// One direct system or a cascade of two through a shared pivot language.
struct TranslationPath {
  std::string name;
  std::vector<const SystemHandle*> systems;

  bool is_cascade() const { return systems.size() == 2; }
  std::string source_lang() const;
  std::string target_lang() const;
};

/// Throws std::invalid_argument for an empty name, a length other than 1 or 2,
/// null systems, a pivot mismatch or a system tag repeated within the path.
void validate_path(const TranslationPath& path);

/// "<path>.<system tag>.<feature>".
std::string namespaced_feature(const TranslationPath& path, std::size_t step, std::string_view feature);
/// "<path>.bias", constant 1 on every candidate of the path in ensembles.
std::string bias_feature(const TranslationPath& path);

/// Each system's own weights under namespaced names.
FeatureWeights path_weights(const TranslationPath& path);

struct PathHypothesis {
  /// Word-level output with untranslated flags from the last step.
  MarkedSentence output;
  /// First-step output; empty for a direct path.
  Sentence pivot;
  std::string path;
  FeatureVector features;
  double total = 0.0;
};

struct CascadeOptions {
  std::size_t k1 = 10;
  std::size_t k2 = 10;
  /// Distinct surfaces in the first step.
  bool unique_first = true;
};

/// Translates through the path. A cascade decodes k1 pivot hypotheses and k2
/// target hypotheses for each; a direct path decodes k1. Candidates carry
/// namespaced features and are sorted by score, best first. Without combined
/// weights each step decodes with its system's weights and a candidate scores
/// the sum of its step totals; with combined weights the steps decode with the
/// namespaced weights found there and candidates are scored by rescoring.
std::vector<PathHypothesis> path_translate(const Sentence& source, const TranslationPath& path,
                                           const CascadeOptions& options = {},
                                           const FeatureWeights* combined = nullptr);

/// Cascade entry point; path must have two systems.
std::vector<PathHypothesis> cascade_translate(const Sentence& source, const TranslationPath& path,
                                              const CascadeOptions& options = {});

/// 1-best of the first step fed to the second step's 1-best.
MarkedSentence greedy_pipe(const Sentence& source, const TranslationPath& path);

/// Options for ensembles; cascades use k1 = k2 = cascade_k, direct paths k1 = direct_k.
struct EnsembleOptions {
  std::size_t cascade_k = 20;
  std::size_t direct_k = 100;
  int jobs = 1;
};

/// Namespaced weights of every path plus zero bias weights.
FeatureWeights ensemble_initial_weights(std::span<const TranslationPath> paths);

/// Merged candidates of all paths with bias features, scored and sorted under
/// the combined weights. Duplicate surfaces from different paths are kept.
std::vector<PathHypothesis> ensemble_candidates(const Sentence& source, std::span<const TranslationPath> paths,
                                                const FeatureWeights& weights, const EnsembleOptions& options = {});

/// Best candidate per distinct surface, best first.
std::vector<PathHypothesis> ensemble_translate(const Sentence& source, std::span<const TranslationPath> paths,
                                               const FeatureWeights& weights, const EnsembleOptions& options = {});

/// 1-best outputs for a corpus, in input order.
std::vector<PathHypothesis> ensemble_translate_corpus(std::span<const Sentence> inputs,
                                                      std::span<const TranslationPath> paths,
                                                      const FeatureWeights& weights, const EnsembleOptions& options = {});

/// Tunes combined weights over the merged lists of all paths, starting from
/// ensemble_initial_weights. Asking for MERT with more than 12 features
/// prints a warning recommending PRO.
TuneResult global_tune(std::span<const TranslationPath> paths, const Bitext& dev, const TuneOptions& tune,
                       const EnsembleOptions& options = {});

struct SyntheticBitext {
  Bitext bitext;
  /// Tag of the generating system.
  std::string provenance;
};

/// Replaces the pivot side of a pivot-target bitext with the 1-best
/// translation into the source language. The target side is left untouched.
SyntheticBitext synthesize_bitext(const Bitext& pivot_target, const SystemHandle& pivot_to_source, int jobs = 1);

/// Writes the two bitext files and a "<source>.provenance" sidecar.
void write_synthetic(const SyntheticBitext& synthetic, const std::filesystem::path& source,
                     const std::filesystem::path& target);

/// Ordered concatenation. Throws std::invalid_argument when language tags
/// differ.
Bitext concat_bitexts(std::span<const Bitext> bitexts);

}  // namespace charpivot
