#include <algorithm>
#include <cmath>
#include <sstream>

#include "charpivot/tuner.hpp"
#include "charpivot/util.hpp"
#include "doctest.h"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace charpivot;
using namespace testgen;

TEST_CASE("word BLEU objective detokenizes character output") {
  const auto stats = word_bleu_objective({"т", "и", "▁", "с", "и"}, {"ти", "си"}, Level::character);
  CHECK(stats.matches[0] == 2);
  CHECK(stats.totals[0] == 2);
  CHECK(stats.matches[1] == 1);
  CHECK(stats.totals[1] == 1);

  const auto exact = word_bleu_objective({"a", "b", "c", "d"}, {"a", "b", "c", "d"}, Level::word);
  for (int n = 0; n < 4; ++n) CHECK(exact.matches[n] == exact.totals[n]);
  CHECK(exact.hyp_length == exact.ref_length);

  const auto empty = word_bleu_objective({}, {"a"}, Level::character);
  CHECK(empty.hyp_length == 0);
  CHECK(empty.matches[0] == 0);
}

TEST_CASE("property: summed sentence statistics give corpus BLEU") {
  Rng rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = random_instances(rng, 12, 6, 3);
    const auto w = random_dense_weights(rng, 3);
    std::vector<Sentence> hyps, refs;
    for (const auto& i : inst) {
      hyps.push_back(i.candidates[select(i, w)].surface);
      refs.push_back(i.reference);
    }
    CHECK(std::abs(100.0 * selected_bleu(inst, w) - corpus_bleu(hyps, refs).bleu) <= 1e-12);
  }
}

TEST_CASE("select breaks ties towards the earlier candidate and ignores unweighted features") {
  TuningInstance inst = make_instance({"a"}, {{{"x"}, {{"f", 1.0}}, {}}, {{"a"}, {{"f", 1.0}, {"g", 5.0}}, {}}});
  CHECK(select(inst, {{"f", 1.0}}) == 0);
  CHECK(select(inst, {{"f", 1.0}, {"g", 0.1}}) == 1);
  CHECK_THROWS_AS(select(TuningInstance{}, {{"f", 1.0}}), std::invalid_argument);
}

TEST_CASE("property: line search equals a dense grid scan") {
  Rng rng(72);
  constexpr int kGrid = 100000;
  constexpr double kRange = 10.0;
  constexpr double kSpacing = 2.0 * kRange / (kGrid - 1);
  for (int trial = 0; trial < 12; ++trial) {
    const auto inst = random_instances(rng, 8, 12, 3);
    const auto origin = random_dense_weights(rng, 3);
    const auto direction = random_dense_weights(rng, 3);
    const auto result = line_search(inst, origin, direction);

    CHECK(result.lower < result.upper);
    CHECK(result.gamma > result.lower);
    CHECK(result.gamma < result.upper);
    CHECK(std::abs(selected_bleu(inst, along(origin, direction, result.gamma)) - result.bleu) <= 1e-12);

    double grid_best = -1.0;
    double grid_gamma = 0.0;
    for (int g = 0; g < kGrid; ++g) {
      const double gamma = -kRange + g * kSpacing;
      const double bleu = selected_bleu(inst, along(origin, direction, gamma));
      if (bleu > grid_best) {
        grid_best = bleu;
        grid_gamma = gamma;
      }
    }
    // Nothing on the line beats the exact optimum.
    CHECK(grid_best <= result.bleu + 1e-12);
    // The grid finds it whenever the optimal interval holds a grid point.
    const double lo = std::max(result.lower, -kRange), hi = std::min(result.upper, kRange);
    if (hi - lo > kSpacing) {
      CHECK(grid_best >= result.bleu - 1e-12);
      (void)grid_gamma;
    }
  }
}

TEST_CASE("line search with identical candidates has one interval") {
  std::vector<TuningInstance> inst{
      make_instance({"a", "b"}, {{{"a", "b"}, {{"f", 1.0}}, {}}, {{"a", "b"}, {{"f", 1.0}}, {}}})};
  const auto r = line_search(inst, {{"f", 1.0}}, {{"f", 1.0}});
  CHECK(std::isinf(r.lower));
  CHECK(std::isinf(r.upper));
  CHECK(r.gamma == 0.0);
  CHECK(r.bleu == doctest::Approx(0.0));
}

TEST_CASE("MERT with the objective as a feature selects the oracles") {
  Rng rng(73);
  auto inst = random_instances(rng, 20, 10, 0);
  for (auto& i : inst) {
    for (auto& c : i.candidates) c.features["bleu"] = smoothed_sentence_bleu(c.stats);
  }
  MertOptions opt;
  opt.restarts = 2;
  const auto w = mert(inst, {{"bleu", -1.0}}, opt);
  CHECK(w.get("bleu") > 0.0);
  for (const auto& i : inst) {
    const auto chosen = select(i, w);
    for (const auto& c : i.candidates) CHECK(c.features.at("bleu") <= i.candidates[chosen].features.at("bleu"));
  }
}

TEST_CASE("MERT reaches the oracle when one feature ranks it and the other is noise") {
  Rng rng(74);
  std::vector<TuningInstance> inst;
  for (int s = 0; s < 20; ++s) {
    const auto ref = testgen::random_tokens(rng, 4, 8, kTuneVocab);
    std::vector<TuningCandidate> cands;
    for (int c = 0; c < 10; ++c) {
      TuningCandidate cand;
      cand.surface = ref;
      const int edits = c;  // candidate c has c corrupted positions
      for (int e = 0; e < edits && e < static_cast<int>(ref.size()); ++e) cand.surface[e] = "z";
      cand.features["rank"] = -static_cast<double>(c);
      cand.features["noise"] = 2.0 * rng.uniform() - 1.0;
      cands.push_back(std::move(cand));
    }
    rng.shuffle(cands);
    inst.push_back(make_instance(ref, std::move(cands)));
  }
  BleuStats oracle;
  for (const auto& i : inst) {
    for (const auto& c : i.candidates) {
      if (c.surface == i.reference) oracle += c.stats;
    }
  }
  const FeatureWeights w0{{"rank", 0.0}, {"noise", 1.0}};
  const auto w = mert(inst, w0, {});
  CHECK(selected_bleu(inst, w) == doctest::Approx(bleu_from_stats(oracle)).epsilon(1e-12));
  CHECK(selected_bleu(inst, w) == doctest::Approx(1.0));
  CHECK(selected_bleu(inst, w0) < 1.0);
}

TEST_CASE("property: MERT never lowers BLEU and is deterministic") {
  Rng rng(75);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = random_instances(rng, 10, 8, 4);
    const auto w0 = random_dense_weights(rng, 4);
    MertOptions opt;
    opt.restarts = 3;
    opt.random_directions = 5;
    const auto w = mert(inst, w0, opt);
    CHECK(selected_bleu(inst, w) >= selected_bleu(inst, w0));
    opt.jobs = 3;
    CHECK(mert(inst, w0, opt) == w);
  }
}

TEST_CASE("property: logistic loss gradient matches central differences") {
  Rng rng(76);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 1 + rng.below(6);
    std::vector<std::vector<double>> diffs(1 + rng.below(30), std::vector<double>(dim));
    for (auto& x : diffs) {
      for (auto& v : x) v = 4.0 * rng.normal();
    }
    std::vector<double> w(dim);
    for (auto& v : w) v = rng.normal();
    const double l2 = trial % 2 == 0 ? 1e-3 : 0.5;
    std::vector<double> grad;
    pro_loss(diffs, w, l2, &grad);
    const double h = 1e-5;
    for (std::size_t k = 0; k < dim; ++k) {
      auto plus = w, minus = w;
      plus[k] += h;
      minus[k] -= h;
      const double fd = (pro_loss(diffs, plus, l2) - pro_loss(diffs, minus, l2)) / (2.0 * h);
      CHECK(std::abs(grad[k] - fd) <= 1e-6 * std::max(std::abs(grad[k]), 1e-3));
    }
  }
}

TEST_CASE("logistic loss handles large margins") {
  std::vector<std::vector<double>> diffs{{1000.0}, {-1000.0}};
  std::vector<double> grad;
  const double loss = pro_loss(diffs, std::vector<double>{1.0}, 0.0, &grad);
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(500.0));
  CHECK(grad[0] == doctest::Approx(500.0));
}

TEST_CASE("PRO defaults") {
  const ProOptions opt;
  CHECK(opt.samples == 5000);
  CHECK(opt.keep == 50);
  CHECK(opt.min_diff == 0.05);
  CHECK(opt.l2 == 1e-3);
  CHECK(opt.interpolation == 0.1);
}

TEST_CASE("PRO separates pairs when a feature is the sentence BLEU") {
  Rng rng(77);
  auto inst = random_instances(rng, 30, 12, 2);
  for (auto& i : inst) {
    for (auto& c : i.candidates) c.features["bleu"] = smoothed_sentence_bleu(c.stats);
  }
  const auto result = pro(inst, {{"bleu", 0.0}, {"f0", 0.0}, {"f1", 0.0}});
  REQUIRE(result.pairs > 0);
  CHECK(result.classifier.get("bleu") > 0.0);
  CHECK(result.accuracy == 1.0);
  CHECK(result.updated);
  CHECK(result.weights.get("bleu") == doctest::Approx(0.1 * result.classifier.get("bleu")));
}

TEST_CASE("PRO without usable pairs keeps the weights") {
  std::vector<TuningInstance> inst{
      make_instance({"a", "b"}, {{{"a", "b"}, {{"f", 1.0}}, {}}, {{"a", "b"}, {{"f", 2.0}}, {}}})};
  const FeatureWeights w0{{"f", 0.5}};
  const auto result = pro(inst, w0);
  CHECK(result.pairs == 0);
  CHECK_FALSE(result.updated);
  CHECK(result.weights == w0);
}

TEST_CASE("property: PRO never lowers BLEU and is deterministic") {
  Rng rng(78);
  for (int trial = 0; trial < 30; ++trial) {
    const auto inst = random_instances(rng, 10, 10, 3);
    const auto w0 = random_dense_weights(rng, 3);
    const auto a = pro(inst, w0);
    CHECK(selected_bleu(inst, a.weights) >= selected_bleu(inst, w0));
    CHECK(pro(inst, w0).weights == a.weights);
  }
}

TEST_CASE("property: PRO interpolates with the smallest doubling of psi that gains") {
  Rng rng(82);
  int escalated = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto inst = random_instances(rng, 8, 10, 3);
    const auto w0 = random_dense_weights(rng, 3);
    const auto r = pro(inst, w0);
    if (!r.updated) continue;
    double n0 = 0.0, nc = 0.0;
    for (const auto& [name, value] : w0.values()) {
      n0 += std::abs(value);
      nc += std::abs(r.classifier.get_or(name, 0.0));
    }
    auto mix = [&](double psi) {
      FeatureWeights w;
      for (const auto& [name, value] : w0.values()) {
        w.set(name, psi * (n0 / nc) * r.classifier.get_or(name, 0.0) + (1.0 - psi) * value);
      }
      return w;
    };
    const double base = selected_bleu(inst, w0);
    bool on_ladder = false;
    for (double psi : {0.1, 0.2, 0.4, 0.8, 1.0}) on_ladder = on_ladder || r.interpolation == psi;
    REQUIRE(on_ladder);
    for (const auto& [name, value] : r.weights.values()) {
      CHECK(value == doctest::Approx(mix(r.interpolation).get(name)).epsilon(1e-12));
    }
    for (double psi = 0.1; psi < r.interpolation; psi *= 2.0) CHECK(selected_bleu(inst, mix(psi)) <= base);
    if (r.interpolation > 0.1) {
      ++escalated;
      CHECK(selected_bleu(inst, r.weights) > base);
    }
  }
  CHECK(escalated > 0);
}

TEST_CASE("property: positive rescaling leaves selections unchanged") {
  Rng rng(79);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instances(rng, 5, 10, 4);
    const auto w = random_dense_weights(rng, 4);
    const double factor = std::exp(4.0 * rng.uniform() - 2.0);
    for (const auto& i : inst) CHECK(select(i, w) == select(i, w.scaled(factor)));
  }
}

namespace {

// A stand-in decoder: fixed candidate pools, returns the top k under the
// weights.
struct PoolSystem {
  std::vector<Sentence> references;
  std::vector<std::vector<TuningCandidate>> pools;

  std::vector<std::vector<TuningCandidate>> operator()(const FeatureWeights& w, std::size_t k) const {
    std::vector<std::vector<TuningCandidate>> out;
    for (const auto& pool : pools) {
      std::vector<std::size_t> order(pool.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return rescore(pool[a].features, w) > rescore(pool[b].features, w); });
      std::vector<TuningCandidate> list;
      for (std::size_t i = 0; i < std::min(k, order.size()); ++i) list.push_back(pool[order[i]]);
      out.push_back(std::move(list));
    }
    return out;
  }
};

PoolSystem toy_system(Rng& rng, int sentences) {
  PoolSystem sys;
  for (int s = 0; s < sentences; ++s) {
    const auto ref = testgen::random_tokens(rng, 4, 8, kTuneVocab);
    sys.references.push_back(ref);
    std::vector<TuningCandidate> pool;
    for (int c = 0; c < 30; ++c) {
      TuningCandidate cand;
      cand.surface = ref;
      for (int e = 0; e < c / 4 && e < static_cast<int>(ref.size()); ++e) cand.surface[e] = "z" + std::to_string(c);
      cand.features["quality"] = -static_cast<double>(c / 4) + 0.01 * rng.uniform();
      cand.features["noise"] = 4.0 * rng.uniform();
      pool.push_back(std::move(cand));
    }
    rng.shuffle(pool);
    sys.pools.push_back(std::move(pool));
  }
  return sys;
}

}  // namespace

TEST_CASE("tune loop on a toy system reaches the oracle within three iterations") {
  Rng rng(80);
  const auto sys = toy_system(rng, 15);
  TuneOptions opt;
  opt.method = TuneMethod::mert;
  opt.outer_iterations = 6;
  opt.mert.restarts = 3;
  const FeatureWeights w0{{"quality", 0.0}, {"noise", 1.0}};
  const auto result = tune_loop(sys.references, [&](const FeatureWeights& w) { return sys(w, 5); }, w0, opt);
  REQUIRE(result.trajectory.size() >= 2);
  CHECK(result.trajectory[0].dev_bleu < 100.0);
  bool reached = false;
  for (const auto& step : result.trajectory) reached = reached || (step.iteration <= 3 && step.dev_bleu == doctest::Approx(100.0));
  CHECK(reached);
  for (std::size_t i = 1; i < result.trajectory.size(); ++i) {
    CHECK(result.trajectory[i].candidates >= result.trajectory[i - 1].candidates);
  }
  CHECK(selected_bleu(result.accumulated, result.weights) >= selected_bleu(result.accumulated, w0));
}

// PRO moves a tenth of the way per iteration, so it only has to climb steadily.
TEST_CASE("tune loop with pro climbs on a toy system") {
  Rng rng(80);
  const auto sys = toy_system(rng, 15);
  TuneOptions opt;
  opt.method = TuneMethod::pro;
  opt.outer_iterations = 10;
  const FeatureWeights w0{{"quality", 0.0}, {"noise", 1.0}};
  const auto result = tune_loop(sys.references, [&](const FeatureWeights& w) { return sys(w, 5); }, w0, opt);
  REQUIRE(result.trajectory.size() >= 3);
  for (std::size_t i = 1; i + 1 < result.trajectory.size(); ++i) {
    CHECK(result.trajectory[i].dev_bleu > result.trajectory[i - 1].dev_bleu);
  }
  double best = 0.0;
  for (const auto& step : result.trajectory) best = std::max(best, step.dev_bleu);
  CHECK(best >= 85.0);
  CHECK(result.weights.get("quality") > 0.0);
  CHECK(selected_bleu(result.accumulated, result.weights) >= selected_bleu(result.accumulated, w0));
}

TEST_CASE("tune loop merges repeated candidates and validates its generator") {
  Rng rng(81);
  const auto sys = toy_system(rng, 4);
  TuneOptions opt;
  opt.outer_iterations = 3;
  opt.min_improvement = -1.0;  // never stop early
  const FeatureWeights w0{{"quality", 1.0}, {"noise", 0.0}};
  // Weights are ignored: every call returns the same lists.
  const auto result = tune_loop(sys.references, [&](const FeatureWeights&) { return sys(w0, 5); }, w0, opt);
  REQUIRE(result.trajectory.size() == 4);
  for (const auto& step : result.trajectory) CHECK(step.candidates == 20);

  CHECK_THROWS_AS(tune_loop(sys.references, [&](const FeatureWeights&) { return std::vector<std::vector<TuningCandidate>>{}; }, w0, opt),
                  std::runtime_error);
  CHECK_THROWS_AS(tune_loop({}, [&](const FeatureWeights& w) { return sys(w, 5); }, w0, opt), std::invalid_argument);

  std::ostringstream out;
  write_trajectory(out, result.trajectory);
  CHECK(out.str().rfind("iteration\tdev_bleu\tcandidates\n0\t", 0) == 0);
  CHECK(parse_tune_method("pro") == TuneMethod::pro);
  CHECK_THROWS_AS(parse_tune_method("mira"), std::invalid_argument);
}
