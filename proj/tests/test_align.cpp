#include <cmath>
#include <sstream>

#include "charpivot/align.hpp"
#include "charpivot/util.hpp"
#include "doctest.h"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace charpivot;
using namespace testgen;

TEST_CASE("IBM-1 single step on the la-maison corpus") {
  EmOptions opt;
  opt.model = AlignModel::ibm1;
  opt.ibm1_iterations = 1;
  opt.use_null = false;
  const auto model = em_train(la_maison(), opt);
  CHECK(std::abs(model.lex.prob("la", "the") - 0.5) < 1e-12);
  CHECK(std::abs(model.lex.prob("maison", "the") - 0.25) < 1e-12);
  CHECK(std::abs(model.lex.prob("fleur", "the") - 0.25) < 1e-12);
  CHECK(std::abs(model.lex.prob("la", "house") - 0.5) < 1e-12);
  CHECK(std::abs(model.lex.prob("maison", "house") - 0.5) < 1e-12);
}

TEST_CASE("forced mass on a single pair") {
  EmOptions opt;
  opt.use_null = false;
  for (int it : {1, 3}) {
    opt.ibm1_iterations = it;
    opt.ibm2_iterations = it;
    const auto model = em_train(Bitext{"s", "t", {{{"a"}, {"x"}}}}, opt);
    CHECK(model.lex.prob("a", "x") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(viterbi_align(model, {"a"}, {"x"}) == [] {
      AlignmentMatrix a(1, 1);
      a.add(0, 0);
      return a;
    }());
  }
}

TEST_CASE("em_train rejects bad input") {
  CHECK_THROWS_AS(em_train(Bitext{}), std::invalid_argument);
  EmOptions opt;
  opt.ibm1_iterations = 0;
  opt.ibm2_iterations = 0;
  CHECK_THROWS_AS(em_train(la_maison(), opt), std::invalid_argument);
}

TEST_CASE("viterbi prefers the argmax and leaves NULL-aligned words unlinked") {
  AlignmentModel model;
  model.lex = LexTable::from_counts({{"a", "x", 9.0}, {"b", "x", 1.0}, {"a", "NULL", 1.0}, {"c", "NULL", 9.0}});
  CHECK(viterbi_align(model, {"a"}, {"x"}).links() == std::vector<std::pair<int, int>>{{0, 0}});
  CHECK(viterbi_align(model, {"c"}, {"x"}).empty());
  // Unseen source token: every slot scores the floor, NULL wins the tie.
  CHECK(viterbi_align(model, {"zzz"}, {"x"}).empty());
}

TEST_CASE("converged la-maison alignment") {
  EmOptions opt;
  opt.model = AlignModel::ibm1;
  opt.ibm1_iterations = 50;
  opt.use_null = false;
  const auto model = em_train(la_maison(), opt);
  const auto a = viterbi_align(model, {"la", "maison"}, {"the", "house"});
  CHECK(a.links() == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
}

TEST_CASE("property: EM log-likelihood is monotone and matches the oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto corpus = toy_alignment_corpus(rng, 5 + static_cast<int>(rng.below(20)));
    EmOptions opt;
    opt.ibm1_iterations = 5;
    opt.ibm2_iterations = 5;
    opt.use_null = trial % 3 != 0;
    const auto model = em_train(corpus, opt);
    REQUIRE(model.log_likelihood.size() == 11);
    for (std::size_t i = 1; i < model.log_likelihood.size(); ++i) {
      CHECK(model.log_likelihood[i] >= model.log_likelihood[i - 1] - 1e-9);
    }
    const double oracle = oracle_log_likelihood(model, corpus);
    CHECK(std::abs(model.log_likelihood.back() - oracle) <= 1e-9 * std::abs(oracle));
    CHECK(std::abs(corpus_log_likelihood(model, corpus) - oracle) <= 1e-9 * std::abs(oracle));
  }
}

TEST_CASE("property: lexical rows and distortion contexts are distributions") {
  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const auto corpus = toy_alignment_corpus(rng, 30);
    const auto model = em_train(corpus, {});
    for (std::uint32_t t = 0; t < model.lex.tgt_vocab().size(); ++t) {
      CHECK(model.lex.row_sum(model.lex.tgt_vocab().token(t)) == doctest::Approx(1.0).epsilon(1e-6));
    }
    REQUIRE(model.distortion.has_value());
    for (int l = 1; l <= 12; ++l) {
      for (int m = 1; m <= 12; ++m) {
        for (int j = 0; j < m; ++j) {
          double z = 0.0;
          for (int i = -1; i < l; ++i) z += model.distortion->prob(i, j, l, m);
          CHECK(z == doctest::Approx(1.0).epsilon(1e-6));
        }
      }
    }
  }
}

TEST_CASE("EM is identical for any number of jobs") {
  Rng rng(33);
  const auto corpus = toy_alignment_corpus(rng, 200);
  EmOptions serial;
  EmOptions parallel;
  parallel.jobs = 4;
  const auto a = em_train(corpus, serial);
  const auto b = em_train(corpus, parallel);
  std::ostringstream da, db;
  a.lex.dump(da);
  b.lex.dump(db);
  CHECK(da.str() == db.str());
  CHECK(a.log_likelihood == b.log_likelihood);
  CHECK(a.distortion->weights() == b.distortion->weights());
}

TEST_CASE("lexical table dump is sorted") {
  const auto model = em_train(la_maison(), {});
  std::ostringstream out;
  model.lex.dump(out);
  std::istringstream in(out.str());
  std::string line, previous;
  while (std::getline(in, line)) {
    CHECK(previous <= line);
    previous = line;
  }
}

TEST_CASE("GDFA examples") {
  AlignmentMatrix diag(2, 2);
  diag.add(0, 0);
  diag.add(1, 1);
  CHECK(symmetrize_gdfa(diag, diag) == diag);

  AlignmentMatrix fwd(1, 2), rev(1, 2);
  fwd.add(0, 0);
  rev.add(0, 1);
  CHECK(symmetrize_gdfa(fwd, rev).links() == std::vector<std::pair<int, int>>{{0, 0}});

  CHECK(symmetrize_gdfa(AlignmentMatrix(3, 3), AlignmentMatrix(3, 3)).empty());
  CHECK_THROWS_AS(symmetrize_gdfa(AlignmentMatrix(2, 3), AlignmentMatrix(3, 2)), std::invalid_argument);
}

TEST_CASE("GDFA grows along the diagonal from the intersection") {
  AlignmentMatrix fwd(3, 3), rev(3, 3);
  fwd.add(0, 0);
  rev.add(0, 0);
  fwd.add(1, 1);
  rev.add(2, 0);
  rev.add(2, 2);
  // (1,1) neighbours (0,0); (2,0) and then (2,2) neighbour (1,1) and each
  // still has one end free when visited.
  const auto out = symmetrize_gdfa(fwd, rev);
  CHECK(out.links() == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 0}, {2, 2}});
}

TEST_CASE("property: GDFA sandwich") {
  Rng rng(34);
  for (int trial = 0; trial < 500; ++trial) {
    const int sl = 1 + static_cast<int>(rng.below(8));
    const int tl = 1 + static_cast<int>(rng.below(8));
    const auto fwd = testgen::random_alignment(rng, sl, tl, 0.25);
    const auto rev = testgen::random_alignment(rng, sl, tl, 0.25);
    const auto out = symmetrize_gdfa(fwd, rev);
    for (int s = 0; s < sl; ++s) {
      for (int t = 0; t < tl; ++t) {
        const bool both = fwd.contains(s, t) && rev.contains(s, t);
        const bool either = fwd.contains(s, t) || rev.contains(s, t);
        if (both) CHECK(out.contains(s, t));
        if (out.contains(s, t)) CHECK(either);
      }
    }
    CHECK(symmetrize_gdfa(fwd, rev) == out);
  }
}

TEST_CASE("n-gram links carry over to characters") {
  AlignmentMatrix a(3, 4);
  a.add(0, 0);
  a.add(1, 2);
  const auto c = ngram_links_to_char_links(a);
  CHECK(c == a);
  CHECK(ngram_links_to_char_links(AlignmentMatrix(2, 2)).empty());
  std::vector<AlignmentMatrix> all{a, a};
  CHECK(alignment_point_count(all) == 4);
  CHECK(alignment_point_count({}) == 0);
}

TEST_CASE("alignment matrix bounds") {
  AlignmentMatrix a(2, 2);
  CHECK_THROWS_AS(a.add(2, 0), std::out_of_range);
  CHECK_THROWS_AS(a.add(0, -1), std::out_of_range);
  a.add(1, 0);
  a.add(1, 0);
  CHECK(a.size() == 1);
  CHECK(a.transposed().contains(0, 1));
}

TEST_CASE("Pharaoh IO round trip") {
  Bitext b{"s", "t", {{{"a", "b"}, {"x", "y", "z"}}, {{"c"}, {"w"}}}};
  AlignmentMatrix a0(2, 3), a1(1, 1);
  a0.add(0, 0);
  a0.add(1, 2);
  std::vector<AlignmentMatrix> all{a0, a1};
  std::stringstream ss;
  write_alignments(ss, all);
  CHECK(ss.str() == "0-0 1-2\n\n");
  CHECK(read_alignments(ss, b) == all);
}

TEST_CASE("align_corpus on character bigrams") {
  Bitext words{"mk", "bg", {}};
  Rng rng(35);
  for (int i = 0; i < 60; ++i) {
    auto s = testgen::random_words(rng, 1, 3, {"а", "б", "в", "г"});
    words.pairs.push_back({s, s});
  }
  Bitext chars = words;
  for (auto& p : chars.pairs) {
    p.source = char_encode(p.source);
    p.target = char_encode(p.target);
  }
  AlignOptions opt;
  opt.ngram_order = 2;
  const auto result = align_corpus(chars, opt);
  REQUIRE(result.alignments.size() == chars.size());
  std::size_t diagonal = 0, total = 0;
  for (std::size_t k = 0; k < chars.size(); ++k) {
    CHECK(result.alignments[k].src_len() == chars.pairs[k].source.size());
    for (auto [s, t] : result.alignments[k].links()) {
      diagonal += s == t;
      ++total;
    }
  }
  CHECK(total > 0);
  CHECK(static_cast<double>(diagonal) / static_cast<double>(total) > 0.9);

  opt.jobs = 3;
  CHECK(align_corpus(chars, opt).alignments == result.alignments);
}
