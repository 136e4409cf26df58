#include "charpivot/pivot.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

#include "charpivot/util.hpp"

namespace charpivot {

namespace {

double score_under(const FeatureVector& features, const FeatureWeights& weights) {
  double s = 0.0;
  for (const auto& [name, value] : features) s += weights.get_or(name, 0.0) * value;
  return s;
}

FeatureWeights step_weights(const TranslationPath& path, std::size_t step, const FeatureWeights* combined) {
  const auto& own = path.systems[step]->weights;
  if (combined == nullptr) return own;
  FeatureWeights w;
  for (const auto& [name, value] : own.values()) {
    w.set(name, combined->get_or(namespaced_feature(path, step, name), value));
  }
  return w;
}

void add_namespaced(FeatureVector& out, const TranslationPath& path, std::size_t step, const FeatureVector& features) {
  for (const auto& [name, value] : features) out[namespaced_feature(path, step, name)] = value;
}

void sort_hypotheses(std::vector<PathHypothesis>& hyps) {
  std::stable_sort(hyps.begin(), hyps.end(), [](const PathHypothesis& a, const PathHypothesis& b) {
    if (a.total != b.total) return a.total > b.total;
    if (a.output.tokens != b.output.tokens) return a.output.tokens < b.output.tokens;
    return a.pivot < b.pivot;
  });
}

}  // namespace

std::string TranslationPath::source_lang() const { return systems.front()->source_lang; }
std::string TranslationPath::target_lang() const { return systems.back()->target_lang; }

void validate_path(const TranslationPath& path) {
  if (path.name.empty() || path.name.find_first_of(" \t=.") != std::string::npos) {
    throw std::invalid_argument("invalid path name '" + path.name + "'");
  }
  if (path.systems.empty() || path.systems.size() > 2) {
    throw std::invalid_argument("path " + path.name + " must have one or two systems");
  }
  for (const auto* s : path.systems) {
    if (s == nullptr) throw std::invalid_argument("path " + path.name + " has a missing system");
  }
  if (path.is_cascade()) {
    if (path.systems[0]->target_lang != path.systems[1]->source_lang) {
      throw std::invalid_argument("path " + path.name + ": " + path.systems[0]->tag() + " does not feed " +
                                  path.systems[1]->tag());
    }
    if (path.systems[0]->tag() == path.systems[1]->tag()) {
      throw std::invalid_argument("path " + path.name + " repeats system " + path.systems[0]->tag());
    }
  }
}

std::string namespaced_feature(const TranslationPath& path, std::size_t step, std::string_view feature) {
  return path.name + "." + path.systems.at(step)->tag() + "." + std::string(feature);
}

std::string bias_feature(const TranslationPath& path) { return path.name + ".bias"; }

FeatureWeights path_weights(const TranslationPath& path) {
  validate_path(path);
  FeatureWeights w;
  for (std::size_t step = 0; step < path.systems.size(); ++step) {
    for (const auto& [name, value] : path.systems[step]->weights.values()) w.set(namespaced_feature(path, step, name), value);
  }
  return w;
}

std::vector<PathHypothesis> path_translate(const Sentence& source, const TranslationPath& path,
                                           const CascadeOptions& options, const FeatureWeights* combined) {
  validate_path(path);
  std::vector<PathHypothesis> out;
  const auto w0 = step_weights(path, 0, combined);
  if (!path.is_cascade()) {
    for (auto& t : translate(*path.systems[0], source, options.k1, false, w0)) {
      PathHypothesis h;
      h.output = std::move(t.output);
      h.path = path.name;
      add_namespaced(h.features, path, 0, t.features);
      h.total = combined != nullptr ? score_under(h.features, *combined) : t.total;
      out.push_back(std::move(h));
    }
    // Decoder order is kept for direct paths.
    return out;
  }
  const auto w1 = step_weights(path, 1, combined);
  for (const auto& first : translate(*path.systems[0], source, options.k1, options.unique_first, w0)) {
    for (auto& second : translate(*path.systems[1], first.output.tokens, options.k2, false, w1)) {
      PathHypothesis h;
      h.output = std::move(second.output);
      h.pivot = first.output.tokens;
      h.path = path.name;
      add_namespaced(h.features, path, 0, first.features);
      add_namespaced(h.features, path, 1, second.features);
      h.total = combined != nullptr ? score_under(h.features, *combined) : first.total + second.total;
      out.push_back(std::move(h));
    }
  }
  sort_hypotheses(out);
  return out;
}

std::vector<PathHypothesis> cascade_translate(const Sentence& source, const TranslationPath& path,
                                              const CascadeOptions& options) {
  if (!path.is_cascade()) throw std::invalid_argument("path " + path.name + " is not a cascade");
  return path_translate(source, path, options);
}

MarkedSentence greedy_pipe(const Sentence& source, const TranslationPath& path) {
  validate_path(path);
  MarkedSentence current{source, std::vector<bool>(source.size(), false)};
  for (const auto* system : path.systems) current = translate(*system, current.tokens, 1, false).front().output;
  return current;
}

FeatureWeights ensemble_initial_weights(std::span<const TranslationPath> paths) {
  FeatureWeights w;
  std::set<std::string> names;
  for (const auto& path : paths) {
    if (!names.insert(path.name).second) throw std::invalid_argument("duplicate path name " + path.name);
    const auto own = path_weights(path);
    for (const auto& [name, value] : own.values()) w.set(name, value);
    w.set(bias_feature(path), 0.0);
  }
  return w;
}

std::vector<PathHypothesis> ensemble_candidates(const Sentence& source, std::span<const TranslationPath> paths,
                                                const FeatureWeights& weights, const EnsembleOptions& options) {
  std::vector<std::vector<PathHypothesis>> lists;
  for (const auto& path : paths) {
    CascadeOptions co;
    co.k1 = path.is_cascade() ? options.cascade_k : options.direct_k;
    co.k2 = options.cascade_k;
    auto list = path_translate(source, path, co, &weights);
    for (auto& h : list) {
      h.features[bias_feature(path)] = 1.0;
      h.total = score_under(h.features, weights);
    }
    lists.push_back(std::move(list));
  }
  // Merge by head score; each path keeps its own order.
  std::vector<PathHypothesis> out;
  std::vector<std::size_t> pos(lists.size(), 0);
  while (true) {
    std::size_t best = lists.size();
    for (std::size_t p = 0; p < lists.size(); ++p) {
      if (pos[p] == lists[p].size()) continue;
      if (best == lists.size() || lists[p][pos[p]].total > lists[best][pos[best]].total) best = p;
    }
    if (best == lists.size()) break;
    out.push_back(std::move(lists[best][pos[best]++]));
  }
  return out;
}

std::vector<PathHypothesis> ensemble_translate(const Sentence& source, std::span<const TranslationPath> paths,
                                               const FeatureWeights& weights, const EnsembleOptions& options) {
  auto all = ensemble_candidates(source, paths, weights, options);
  sort_hypotheses(all);
  std::vector<PathHypothesis> out;
  std::set<Sentence> seen;
  for (auto& h : all) {
    if (seen.insert(h.output.tokens).second) out.push_back(std::move(h));
  }
  return out;
}

std::vector<PathHypothesis> ensemble_translate_corpus(std::span<const Sentence> inputs,
                                                      std::span<const TranslationPath> paths,
                                                      const FeatureWeights& weights, const EnsembleOptions& options) {
  std::vector<PathHypothesis> out(inputs.size());
  std::vector<std::string> errors(inputs.size());
  parallel_for(inputs.size(), options.jobs, [&](std::size_t i) {
    try {
      out[i] = ensemble_translate(inputs[i], paths, weights, options).front();
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error("sentence " + std::to_string(i) + ": " + errors[i]);
  }
  return out;
}

TuneResult global_tune(std::span<const TranslationPath> paths, const Bitext& dev, const TuneOptions& tune,
                       const EnsembleOptions& options) {
  if (dev.empty()) throw std::invalid_argument("dev set is empty");
  if (paths.empty()) throw std::invalid_argument("no translation paths to tune");
  const auto w0 = ensemble_initial_weights(paths);
  if (tune.method == TuneMethod::mert && w0.size() > 12) {
    std::clog << "warning: MERT is unstable with " << w0.size() << " features; PRO is recommended\n";
  }
  const auto sources = dev.source_side();
  CandidateGenerator generate = [&](const FeatureWeights& w) {
    std::vector<std::vector<TuningCandidate>> lists(sources.size());
    std::vector<std::string> errors(sources.size());
    parallel_for(sources.size(), options.jobs, [&](std::size_t i) {
      try {
        for (auto& h : ensemble_candidates(sources[i], paths, w, options)) {
          lists[i].push_back({std::move(h.output.tokens), std::move(h.features), {}});
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (!errors[i].empty()) throw std::runtime_error("sentence " + std::to_string(i) + ": " + errors[i]);
    }
    return lists;
  };
  return tune_loop(dev.target_side(), generate, w0, tune);
}

SyntheticBitext synthesize_bitext(const Bitext& pivot_target, const SystemHandle& pivot_to_source, int jobs) {
  if (!pivot_target.source_lang.empty() && !pivot_to_source.source_lang.empty() &&
      pivot_target.source_lang != pivot_to_source.source_lang) {
    throw std::invalid_argument("system " + pivot_to_source.tag() + " does not translate from " +
                                pivot_target.source_lang);
  }
  const auto sources = pivot_target.source_side();
  std::vector<MarkedSentence> translated;
  try {
    translated = translate_best(pivot_to_source, sources, jobs);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string("synthesis failed at ") + e.what());
  }
  SyntheticBitext out;
  out.provenance = pivot_to_source.tag() + ":" + std::string(to_string(pivot_to_source.level));
  out.bitext.source_lang = pivot_to_source.target_lang;
  out.bitext.target_lang = pivot_target.target_lang;
  out.bitext.pairs.reserve(pivot_target.size());
  for (std::size_t i = 0; i < pivot_target.size(); ++i) {
    out.bitext.pairs.push_back({std::move(translated[i].tokens), pivot_target.pairs[i].target});
  }
  return out;
}

void write_synthetic(const SyntheticBitext& synthetic, const std::filesystem::path& source,
                     const std::filesystem::path& target) {
  write_bitext(synthetic.bitext, source, target);
  auto sidecar = source;
  sidecar += ".provenance";
  std::ofstream out(sidecar);
  if (!out) throw std::runtime_error("cannot write " + sidecar.string());
  out << "system=" << synthetic.provenance << '\n'
      << "source_lang=" << synthetic.bitext.source_lang << '\n'
      << "target_lang=" << synthetic.bitext.target_lang << '\n'
      << "pairs=" << synthetic.bitext.size() << '\n';
}

Bitext concat_bitexts(std::span<const Bitext> bitexts) {
  Bitext out;
  if (bitexts.empty()) return out;
  out.source_lang = bitexts.front().source_lang;
  out.target_lang = bitexts.front().target_lang;
  for (const auto& b : bitexts) {
    if (b.source_lang != out.source_lang || b.target_lang != out.target_lang) {
      throw std::invalid_argument("cannot concatenate " + b.source_lang + "-" + b.target_lang + " with " +
                                  out.source_lang + "-" + out.target_lang);
    }
    out.pairs.insert(out.pairs.end(), b.pairs.begin(), b.pairs.end());
  }
  return out;
}

}  // namespace charpivot
