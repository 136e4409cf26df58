#include <algorithm>
#include <cmath>
#include <sstream>

#include "charpivot/metrics.hpp"
#include "charpivot/util.hpp"
#include "doctest.h"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace charpivot;
using namespace testgen;

TEST_CASE("brevity penalty hand example") {
  std::vector<Sentence> hyp{{"the", "cat"}};
  std::vector<Sentence> ref{{"the", "cat", "sat"}};
  const auto r = corpus_bleu(hyp, ref, 2);
  CHECK(r.precisions[0] == doctest::Approx(1.0));
  CHECK(r.precisions[1] == doctest::Approx(1.0));
  CHECK(r.brevity_penalty == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(std::abs(r.bleu - 60.653065971) < 1e-4);
}

TEST_CASE("identical corpora score 100") {
  std::vector<Sentence> s{{"a", "b", "c", "d", "e"}, {"x", "y", "z", "w"}};
  CHECK(corpus_bleu(s, s).bleu == doctest::Approx(100.0));
  CHECK(char_bleu(s, s).bleu == doctest::Approx(100.0));
}

TEST_CASE("zero precision gives zero BLEU") {
  std::vector<Sentence> hyp{{"a", "b"}};
  std::vector<Sentence> ref{{"c", "d"}};
  CHECK(corpus_bleu(hyp, ref).bleu == 0.0);
}

TEST_CASE("char BLEU rewards shared substrings") {
  std::vector<Sentence> hyp{{"cats"}};
  std::vector<Sentence> ref{{"cat"}};
  CHECK(corpus_bleu(hyp, ref).bleu == 0.0);
  CHECK(char_bleu(hyp, ref).bleu > 0.0);
}

TEST_CASE("property: BLEU matches the pairwise oracle and summed statistics") {
  Rng rng(21);
  const std::vector<std::string> vocab{"a", "b", "c", "d"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Sentence> hyps, refs;
    const int n = 1 + static_cast<int>(rng.below(6));
    BleuStats total;
    for (int i = 0; i < n; ++i) {
      hyps.push_back(testgen::random_tokens(rng, 0, 7, vocab));
      refs.push_back(testgen::random_tokens(rng, 1, 7, vocab));
      total += sentence_bleu_stats(hyps.back(), refs.back());
    }
    const auto r = corpus_bleu(hyps, refs);
    CHECK(r.bleu == doctest::Approx(oracle_bleu(hyps, refs, 4)).epsilon(1e-9));
    CHECK(std::abs(100.0 * bleu_from_stats(total) - r.bleu) < 1e-12);
    CHECK(r.bleu >= 0.0);
    CHECK(r.bleu <= 100.0 + 1e-9);
    CHECK(r.brevity_penalty <= 1.0);

    // Permutation invariance.
    std::vector<std::size_t> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<Sentence> ph, pr;
    for (auto i : order) {
      ph.push_back(hyps[i]);
      pr.push_back(refs[i]);
    }
    CHECK(corpus_bleu(ph, pr).bleu == doctest::Approx(r.bleu).epsilon(1e-12));
  }
}

TEST_CASE("property: BLEU is 100 only for exact matches") {
  Rng rng(22);
  const std::vector<std::string> vocab{"a", "b", "c"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Sentence> hyps, refs;
    bool exact = true;
    for (int i = 0; i < 3; ++i) {
      refs.push_back(testgen::random_tokens(rng, 4, 6, vocab));
      hyps.push_back(rng.uniform() < 0.7 ? refs.back() : testgen::random_tokens(rng, 4, 6, vocab));
      exact = exact && hyps.back() == refs.back();
    }
    const double b = corpus_bleu(hyps, refs).bleu;
    CHECK((std::abs(b - 100.0) < 1e-9) == exact);
  }
}

TEST_CASE("property: correcting a word never lowers char BLEU") {
  Rng rng(23);
  const auto alphabet = testgen::cyrillic_alphabet();
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Sentence> refs{testgen::random_words(rng, 2, 6, alphabet)};
    std::vector<Sentence> hyps{refs[0]};
    for (auto& w : hyps[0]) {
      if (rng.uniform() < 0.6) w = testgen::random_word(rng, alphabet);
    }
    for (std::size_t i = 0; i < hyps[0].size(); ++i) {
      const double before = char_bleu(hyps, refs).bleu;
      hyps[0][i] = refs[0][i];
      CHECK(char_bleu(hyps, refs).bleu >= before - 1e-9);
    }
  }
}

TEST_CASE("count_untranslated") {
  std::vector<MarkedSentence> none{{{"a", "b"}, {false, false}}};
  CHECK(count_untranslated(none).untranslated == 0);
  MarkedSentence ten;
  for (int i = 0; i < 10; ++i) {
    ten.tokens.push_back("w");
    ten.oov.push_back(i == 3 || i == 7);
  }
  std::vector<MarkedSentence> one{ten};
  const auto r = count_untranslated(one);
  CHECK(r.untranslated == 2);
  CHECK(r.total_words == 10);
  std::vector<MarkedSentence> bad{{{"a"}, {}}};
  CHECK_THROWS_AS(count_untranslated(bad), std::invalid_argument);

  OovReport baseline{4959, 100000};
  OovReport improved{1841, 100000};
  CHECK(improved.reduction_vs(baseline) == doctest::Approx(62.87).epsilon(1e-3));
}

TEST_CASE("count_untranslated is additive over shards") {
  Rng rng(24);
  std::vector<MarkedSentence> all;
  for (int i = 0; i < 40; ++i) {
    MarkedSentence s;
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int j = 0; j < n; ++j) {
      s.tokens.push_back("w");
      s.oov.push_back(rng.uniform() < 0.3);
    }
    all.push_back(s);
  }
  auto a = count_untranslated(std::span<const MarkedSentence>(all).subspan(0, 17));
  a += count_untranslated(std::span<const MarkedSentence>(all).subspan(17));
  const auto whole = count_untranslated(all);
  CHECK(a.untranslated == whole.untranslated);
  CHECK(a.total_words == whole.total_words);
}

TEST_CASE("length_ratio") {
  std::vector<Sentence> s{{"a", "b"}, {"c"}};
  CHECK(length_ratio(s, s) == 1.0);
  std::vector<Sentence> doubled{{"a", "b", "a", "b"}, {"c", "c"}};
  CHECK(length_ratio(doubled, s) == 2.0);
  std::vector<Sentence> empty;
  CHECK_THROWS(length_ratio(empty, empty));
}

TEST_CASE("report records") {
  std::vector<Sentence> s{{"a", "b", "c", "d"}};
  std::ostringstream out;
  write_report_records(out, corpus_bleu(s, s), "word_");
  CHECK(out.str().find("word_bleu=100\n") == 0);
}
