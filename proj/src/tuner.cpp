#include "charpivot/tuner.hpp"

#include <cstdlib>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <set>
#include <stdexcept>

#include "charpivot/util.hpp"

namespace charpivot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBleuEpsilon = 1e-12;

// Feature vectors laid out over a fixed, sorted name list.
struct DenseInstance {
  std::size_t n = 0;
  std::vector<double> features;  // n x dim, row major
  std::vector<BleuStats> stats;
};

struct Dense {
  std::vector<std::string> names;
  std::vector<DenseInstance> instances;

  std::size_t dim() const { return names.size(); }

  std::vector<double> vector_of(const FeatureWeights& w) const {
    std::vector<double> v(dim(), 0.0);
    for (std::size_t i = 0; i < dim(); ++i) v[i] = w.get_or(names[i], 0.0);
    return v;
  }

  FeatureWeights weights_of(std::span<const double> v) const {
    FeatureWeights w;
    for (std::size_t i = 0; i < dim(); ++i) w.set(names[i], v[i]);
    return w;
  }
};

Dense densify(std::span<const TuningInstance> instances, const FeatureWeights& w0) {
  std::set<std::string> names;
  for (const auto& name : w0.names()) names.insert(name);
  for (const auto& inst : instances) {
    for (const auto& c : inst.candidates) {
      for (const auto& [name, value] : c.features) names.insert(name);
    }
  }
  Dense d;
  d.names.assign(names.begin(), names.end());
  d.instances.reserve(instances.size());
  for (const auto& inst : instances) {
    DenseInstance di;
    di.n = inst.candidates.size();
    di.features.assign(di.n * d.dim(), 0.0);
    for (std::size_t r = 0; r < di.n; ++r) {
      const auto& c = inst.candidates[r];
      std::size_t col = 0;
      for (const auto& [name, value] : c.features) {
        while (d.names[col] != name) ++col;
        di.features[r * d.dim() + col] = value;
      }
      di.stats.push_back(c.stats);
    }
    d.instances.push_back(std::move(di));
  }
  return d;
}

double dot(const double* a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t dense_select(const DenseInstance& inst, std::span<const double> w) {
  std::size_t best = 0;
  double best_score = -kInf;
  for (std::size_t r = 0; r < inst.n; ++r) {
    const double s = dot(&inst.features[r * w.size()], w);
    if (s > best_score) {
      best_score = s;
      best = r;
    }
  }
  return best;
}

double dense_bleu(const Dense& d, std::span<const double> w) {
  BleuStats total;
  for (const auto& inst : d.instances) {
    if (inst.n > 0) total += inst.stats[dense_select(inst, w)];
  }
  return bleu_from_stats(total);
}

struct Event {
  double x;
  std::size_t sentence;
  BleuStats delta;
};

LineSearchResult dense_line_search(const Dense& d, std::span<const double> w, std::span<const double> dir) {
  struct Line {
    double slope, intercept;
    std::size_t index;
    double start;
  };
  BleuStats current;
  std::vector<Event> events;
  std::vector<Line> lines, hull;
  for (std::size_t s = 0; s < d.instances.size(); ++s) {
    const auto& inst = d.instances[s];
    if (inst.n == 0) continue;
    lines.clear();
    for (std::size_t r = 0; r < inst.n; ++r) {
      const double* f = &inst.features[r * d.dim()];
      lines.push_back({dot(f, dir), dot(f, w), r, -kInf});
    }
    std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
      if (a.slope != b.slope) return a.slope < b.slope;
      if (a.intercept != b.intercept) return a.intercept > b.intercept;
      return a.index < b.index;
    });
    hull.clear();
    for (const auto& line : lines) {
      if (!hull.empty() && hull.back().slope == line.slope) continue;
      Line l = line;
      while (!hull.empty()) {
        const double x = (hull.back().intercept - l.intercept) / (l.slope - hull.back().slope);
        if (x <= hull.back().start) {
          hull.pop_back();
        } else {
          l.start = x;
          break;
        }
      }
      if (hull.empty()) l.start = -kInf;
      hull.push_back(l);
    }
    current += inst.stats[hull.front().index];
    for (std::size_t i = 1; i < hull.size(); ++i) {
      BleuStats delta = inst.stats[hull[i].index];
      delta -= inst.stats[hull[i - 1].index];
      events.push_back({hull[i].start, s, delta});
    }
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.x != b.x) return a.x < b.x;
    return a.sentence < b.sentence;
  });

  LineSearchResult best;
  best.bleu = -1.0;
  double lower = -kInf;
  std::size_t i = 0;
  while (true) {
    const double upper = i < events.size() ? events[i].x : kInf;
    const double bleu = bleu_from_stats(current);
    if (bleu > best.bleu) {
      best.bleu = bleu;
      best.lower = lower;
      best.upper = upper;
    }
    if (i == events.size()) break;
    while (i < events.size() && events[i].x == upper) current += events[i++].delta;
    lower = upper;
  }
  if (std::isinf(best.lower) && std::isinf(best.upper)) {
    best.gamma = 0.0;
  } else if (std::isinf(best.lower)) {
    best.gamma = best.upper - 1.0;
  } else if (std::isinf(best.upper)) {
    best.gamma = best.lower + 1.0;
  } else {
    best.gamma = 0.5 * (best.lower + best.upper);
  }
  return best;
}

std::vector<double> random_direction(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (auto& x : v) x /= norm;
  }
  return v;
}

// One MERT run from a start point; returns final weights and BLEU.
std::pair<std::vector<double>, double> mert_run(const Dense& d, std::vector<double> w, Rng& rng,
                                                const MertOptions& options) {
  double bleu = dense_bleu(d, w);
  for (int it = 0; it < options.max_iterations; ++it) {
    std::vector<std::vector<double>> directions;
    for (std::size_t i = 0; i < d.dim(); ++i) {
      std::vector<double> e(d.dim(), 0.0);
      e[i] = 1.0;
      directions.push_back(std::move(e));
    }
    for (int r = 0; r < options.random_directions; ++r) directions.push_back(random_direction(rng, d.dim()));

    std::vector<LineSearchResult> results(directions.size());
    parallel_for(directions.size(), options.jobs,
                 [&](std::size_t k) { results[k] = dense_line_search(d, w, directions[k]); });
    std::size_t best = directions.size();
    double best_bleu = bleu;
    for (std::size_t k = 0; k < results.size(); ++k) {
      if (results[k].bleu > best_bleu + kBleuEpsilon) {
        best_bleu = results[k].bleu;
        best = k;
      }
    }
    if (best == directions.size()) break;
    std::vector<double> next = w;
    for (std::size_t i = 0; i < d.dim(); ++i) next[i] += results[best].gamma * directions[best][i];
    // Guard against rounding at interval edges.
    const double achieved = dense_bleu(d, next);
    if (achieved <= bleu + kBleuEpsilon) break;
    w = std::move(next);
    bleu = achieved;
  }
  return {w, bleu};
}

}  // namespace

BleuStats word_bleu_objective(const Sentence& hyp, const Sentence& ref, Level level, const CharEncoding& enc) {
  return sentence_bleu_stats(level == Level::character ? char_decode(hyp, enc) : hyp, ref);
}

TuningInstance make_instance(const Sentence& reference, std::vector<TuningCandidate> candidates) {
  for (auto& c : candidates) c.stats = sentence_bleu_stats(c.surface, reference);
  return {reference, std::move(candidates)};
}

std::size_t select(const TuningInstance& instance, const FeatureWeights& weights) {
  if (instance.candidates.empty()) throw std::invalid_argument("cannot select from an empty candidate list");
  std::size_t best = 0;
  double best_score = -kInf;
  for (std::size_t r = 0; r < instance.candidates.size(); ++r) {
    double s = 0.0;
    for (const auto& [name, value] : instance.candidates[r].features) s += weights.get_or(name, 0.0) * value;
    if (s > best_score) {
      best_score = s;
      best = r;
    }
  }
  return best;
}

BleuStats selected_stats(std::span<const TuningInstance> instances, const FeatureWeights& weights) {
  BleuStats total;
  for (const auto& inst : instances) {
    if (!inst.candidates.empty()) total += inst.candidates[select(inst, weights)].stats;
  }
  return total;
}

double selected_bleu(std::span<const TuningInstance> instances, const FeatureWeights& weights) {
  return bleu_from_stats(selected_stats(instances, weights));
}

LineSearchResult line_search(std::span<const TuningInstance> instances, const FeatureWeights& origin,
                             const FeatureWeights& direction) {
  FeatureWeights names = origin;
  for (const auto& [name, value] : direction.values()) {
    if (!names.contains(name)) names.set(name, 0.0);
  }
  const Dense d = densify(instances, names);
  return dense_line_search(d, d.vector_of(origin), d.vector_of(direction));
}

FeatureWeights mert(std::span<const TuningInstance> instances, const FeatureWeights& w0, const MertOptions& options) {
  if (instances.empty()) throw std::invalid_argument("mert needs at least one instance");
  const Dense d = densify(instances, w0);
  Rng rng(options.seed);
  auto [best_w, best_bleu] = mert_run(d, d.vector_of(w0), rng, options);
  for (int r = 0; r < options.restarts; ++r) {
    std::vector<double> start(d.dim());
    for (auto& x : start) x = 2.0 * rng.uniform() - 1.0;
    auto [w, bleu] = mert_run(d, std::move(start), rng, options);
    if (bleu > best_bleu + kBleuEpsilon) {
      best_w = std::move(w);
      best_bleu = bleu;
    }
  }
  return d.weights_of(best_w);
}

double pro_loss(std::span<const std::vector<double>> diffs, std::span<const double> w, double l2,
                std::vector<double>* gradient) {
  if (gradient != nullptr) gradient->assign(w.size(), 0.0);
  double loss = 0.0;
  const double m = static_cast<double>(std::max<std::size_t>(diffs.size(), 1));
  for (const auto& x : diffs) {
    const double margin = dot(x.data(), w);
    // log(1 + exp(-margin)) without overflow.
    loss += margin > 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
    if (gradient != nullptr) {
      const double sig = margin > 0.0 ? std::exp(-margin) / (1.0 + std::exp(-margin)) : 1.0 / (1.0 + std::exp(margin));
      for (std::size_t i = 0; i < w.size(); ++i) (*gradient)[i] -= sig * x[i] / m;
    }
  }
  loss /= m;
  double norm = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    norm += w[i] * w[i];
    if (gradient != nullptr) (*gradient)[i] += l2 * w[i];
  }
  return loss + 0.5 * l2 * norm;
}

ProResult pro(std::span<const TuningInstance> instances, const FeatureWeights& w0, const ProOptions& options) {
  if (instances.empty()) throw std::invalid_argument("pro needs at least one instance");
  const Dense d = densify(instances, w0);
  const std::size_t dim = d.dim();
  Rng rng(options.seed);

  std::vector<std::vector<double>> diffs;
  for (const auto& inst : d.instances) {
    if (inst.n < 2) continue;
    std::vector<double> sbleu(inst.n);
    for (std::size_t r = 0; r < inst.n; ++r) sbleu[r] = smoothed_sentence_bleu(inst.stats[r]);
    struct Sample {
      std::size_t better, worse;
      double gap;
    };
    std::vector<Sample> samples;
    for (std::size_t s = 0; s < options.samples; ++s) {
      const std::size_t i = rng.below(inst.n), j = rng.below(inst.n);
      const double gap = sbleu[i] - sbleu[j];
      if (std::abs(gap) <= options.min_diff) continue;
      samples.push_back(gap > 0 ? Sample{i, j, gap} : Sample{j, i, -gap});
    }
    std::stable_sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.gap > b.gap; });
    if (samples.size() > options.keep) samples.resize(options.keep);
    for (const auto& s : samples) {
      std::vector<double> x(dim);
      for (std::size_t k = 0; k < dim; ++k) x[k] = inst.features[s.better * dim + k] - inst.features[s.worse * dim + k];
      diffs.push_back(std::move(x));
    }
  }

  ProResult result;
  result.weights = d.weights_of(d.vector_of(w0));
  result.classifier = result.weights;
  result.pairs = diffs.size();
  if (diffs.empty()) {
    std::clog << "pro: no pairs survived sampling; keeping the current weights\n";
    return result;
  }

  // Optimize on features scaled to unit root mean square.
  std::vector<double> scale(dim, 0.0);
  for (const auto& x : diffs) {
    for (std::size_t k = 0; k < dim; ++k) scale[k] += x[k] * x[k];
  }
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(diffs.size()));
    if (s == 0.0) s = 1.0;
  }
  std::vector<std::vector<double>> scaled = diffs;
  for (auto& x : scaled) {
    for (std::size_t k = 0; k < dim; ++k) x[k] /= scale[k];
  }
  // The penalty stays on the unscaled weights v/scale; scaling only reshapes the descent.
  const auto objective = [&](const std::vector<double>& at, std::vector<double>* g) {
    double value = pro_loss(scaled, at, 0.0, g);
    for (std::size_t k = 0; k < dim; ++k) {
      const double inv = 1.0 / (scale[k] * scale[k]);
      value += 0.5 * options.l2 * at[k] * at[k] * inv;
      if (g != nullptr) (*g)[k] += options.l2 * at[k] * inv;
    }
    return value;
  };
  std::vector<double> v(dim, 0.0), grad, trial(dim);
  double loss = objective(v, &grad);
  double step = 1.0;
  for (int it = 0; it < options.iterations; ++it) {
    double gnorm = 0.0;
    for (double g : grad) gnorm += g * g;
    if (gnorm < 1e-20) break;
    step *= 2.0;
    while (true) {
      for (std::size_t k = 0; k < dim; ++k) trial[k] = v[k] - step * grad[k];
      const double next = objective(trial, nullptr);
      if (next <= loss - 0.5 * step * gnorm || step < 1e-12) break;
      step *= 0.5;
    }
    v = trial;
    loss = objective(v, &grad);
  }

  std::vector<double> classifier(dim);
  for (std::size_t k = 0; k < dim; ++k) classifier[k] = v[k] / scale[k];
  std::size_t correct = 0;
  for (const auto& x : diffs) correct += dot(x.data(), classifier) > 0.0;
  result.accuracy = static_cast<double>(correct) / static_cast<double>(diffs.size());
  result.classifier = d.weights_of(classifier);

  // The classifier's scale is arbitrary; bring it to the L1 norm of w0 so the
  // interpolation weight means what it says.
  const auto start = d.vector_of(w0);
  double start_norm = 0.0, classifier_norm = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    start_norm += std::abs(start[k]);
    classifier_norm += std::abs(classifier[k]);
  }
  const double rescale = start_norm > 0.0 && classifier_norm > 0.0 ? start_norm / classifier_norm : 1.0;
  // A step that leaves BLEU on the lists where it was would end the tuning
  // loop, so the interpolation weight doubles until the lists improve.
  const double base = dense_bleu(d, start);
  std::vector<double> mixed(dim), first;
  for (double psi = options.interpolation; psi > 0.0; psi = psi >= 1.0 ? 0.0 : std::min(1.0, 2.0 * psi)) {
    for (std::size_t k = 0; k < dim; ++k) mixed[k] = psi * rescale * classifier[k] + (1.0 - psi) * start[k];
    const double b = dense_bleu(d, mixed);
    if (first.empty()) {
      if (b < base) return result;
      first = mixed;
    }
    if (b > base) {
      result.weights = d.weights_of(mixed);
      result.interpolation = psi;
      result.updated = true;
      return result;
    }
  }
  result.weights = d.weights_of(first);
  result.interpolation = options.interpolation;
  result.updated = true;
  return result;
}

TuneMethod parse_tune_method(std::string_view text) {
  if (text == "mert") return TuneMethod::mert;
  if (text == "pro") return TuneMethod::pro;
  throw std::invalid_argument("unknown tuning method '" + std::string(text) + "'");
}

namespace {

std::string candidate_key(const TuningCandidate& c) {
  std::string key = join(c.surface);
  for (const auto& [name, value] : c.features) {
    key += '\t';
    key += name;
    key += '=';
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    key += buf;
  }
  return key;
}

}  // namespace

TuneResult tune_loop(std::span<const Sentence> references, const CandidateGenerator& generate, const FeatureWeights& w0,
                     const TuneOptions& options) {
  if (references.empty()) throw std::invalid_argument("tuning needs a non-empty dev set");
  TuneResult result;
  result.accumulated.resize(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) result.accumulated[i].reference = references[i];
  std::vector<std::set<std::string>> seen(references.size());

  FeatureWeights w = w0;
  double best_bleu = -1.0;
  std::vector<FeatureWeights> tried;
  for (int iteration = 0; iteration <= options.outer_iterations; ++iteration) {
    if (iteration > 0) {
      if (options.method == TuneMethod::mert) {
        w = mert(result.accumulated, w, options.mert);
      } else {
        w = pro(result.accumulated, w, options.pro).weights;
      }
    }
    auto lists = generate(w);
    if (lists.size() != references.size()) {
      throw std::runtime_error("candidate generator returned " + std::to_string(lists.size()) + " lists for " +
                               std::to_string(references.size()) + " dev sentences");
    }
    BleuStats decoded;
    std::size_t total = 0;
    for (std::size_t i = 0; i < lists.size(); ++i) {
      auto& acc = result.accumulated[i];
      for (auto& c : lists[i]) c.stats = sentence_bleu_stats(c.surface, acc.reference);
      if (!lists[i].empty()) decoded += lists[i].front().stats;
      for (auto& c : lists[i]) {
        if (seen[i].insert(candidate_key(c)).second) acc.candidates.push_back(std::move(c));
      }
      total += acc.candidates.size();
    }
    const double bleu = 100.0 * bleu_from_stats(decoded);
    result.trajectory.push_back({iteration, bleu, total});
    tried.push_back(w);
    const bool enough = best_bleu < 0.0 || bleu - best_bleu >= options.min_improvement;
    best_bleu = std::max(best_bleu, bleu);
    if (!enough) break;
  }
  // Best decoded BLEU among weights that do no worse than w0 on the final
  // accumulated lists; w0 always qualifies.
  const double floor = selected_bleu(result.accumulated, w0);
  std::size_t pick = 0;
  for (std::size_t i = 1; i < tried.size(); ++i) {
    if (result.trajectory[i].dev_bleu > result.trajectory[pick].dev_bleu &&
        selected_bleu(result.accumulated, tried[i]) >= floor) {
      pick = i;
    }
  }
  result.weights = tried[pick];
  return result;
}

void write_trajectory(std::ostream& out, std::span<const TuneStep> trajectory) {
  out << "iteration\tdev_bleu\tcandidates\n";
  for (const auto& s : trajectory) out << s.iteration << '\t' << format_double(s.dev_bleu) << '\t' << s.candidates << '\n';
}

}  // namespace charpivot
