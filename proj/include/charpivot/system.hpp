#pragma once

// A trained translation system: phrase table, language model and weights at
// word or character level, with training, translation and tuning entry points.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "charpivot/align.hpp"
#include "charpivot/decoder.hpp"
#include "charpivot/features.hpp"
#include "charpivot/lm.hpp"
#include "charpivot/phrase_table.hpp"
#include "charpivot/text.hpp"
#include "charpivot/tuner.hpp"

namespace charpivot {

struct SystemConfig {
  Level level = Level::word;
  /// Character n-gram context used for alignment (character level only).
  int align_ngram = 1;
  int lm_order = 5;
  int max_phrase_length = 7;
  /// Significance pruning threshold epsilon; empty keeps the full table.
  std::optional<double> prune_epsilon;
  EmOptions em;
  DecoderOptions decoder;
  CharEncoding encoding;
  int jobs = 1;

  static SystemConfig word_defaults();
  /// Bigram alignment, order-10 LM, phrases up to 10 characters, monotone.
  static SystemConfig char_defaults();
  static SystemConfig defaults_for(Level level);
};

struct SystemHandle {
  std::string source_lang;
  std::string target_lang;
  Level level = Level::word;
  CharEncoding encoding;
  PhraseTable table;
  NgramLM lm;
  FeatureWeights weights = FeatureWeights::defaults();
  DecoderOptions decoder;

  /// "source-target".
  std::string tag() const { return source_lang + "-" + target_lang; }
};

struct TrainingReport {
  std::size_t pairs = 0;
  std::size_t alignment_points = 0;
  std::size_t table_before_pruning = 0;
  std::size_t table_size = 0;
};

/// Trains on a word-level bitext. The LM is trained on the target side plus
/// any extra target-language sentences.
SystemHandle train_system(const Bitext& bitext, const SystemConfig& config, std::span<const Sentence> extra_lm_text = {},
                          TrainingReport* report = nullptr);

struct Translation {
  /// Word-level output with untranslated flags.
  MarkedSentence output;
  FeatureVector features;
  double total = 0.0;
};

/// Translates a word-level sentence; character systems encode the input and
/// detokenize the output. Uses the given weights instead of the system's.
std::vector<Translation> translate(const SystemHandle& system, const Sentence& words, std::size_t k, bool unique,
                                   const FeatureWeights& weights);
std::vector<Translation> translate(const SystemHandle& system, const Sentence& words, std::size_t k = 1,
                                   bool unique = false);

/// Parallel over sentences, results in input order. A failure is rethrown as
/// std::runtime_error naming the sentence index.
std::vector<std::vector<Translation>> translate_corpus(const SystemHandle& system, std::span<const Sentence> inputs,
                                                       std::size_t k, bool unique, const FeatureWeights& weights,
                                                       int jobs);

/// 1-best word-level outputs.
std::vector<MarkedSentence> translate_best(const SystemHandle& system, std::span<const Sentence> inputs, int jobs);

/// Candidate generator decoding the dev sources with the offered weights.
CandidateGenerator system_generator(const SystemHandle& system, std::vector<Sentence> sources, std::size_t k, int jobs);

/// Tunes the system's weights on a word-level dev bitext with k-best lists of
/// size k; stores the result in system.weights.
TuneResult tune_system(SystemHandle& system, const Bitext& dev, const TuneOptions& options, std::size_t k = 100,
                       int jobs = 1);

/// Directory layout: system.txt, phrase-table.txt, lm.arpa, weights.txt.
void save_system(const SystemHandle& system, const std::filesystem::path& dir);
SystemHandle load_system(const std::filesystem::path& dir);

}  // namespace charpivot
