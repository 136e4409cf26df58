#include <sstream>

#include "charpivot/text.hpp"
#include "charpivot/util.hpp"
#include "doctest.h"
#include "support/generators.hpp"

using namespace charpivot;

TEST_CASE("char_encode replaces spaces with the marker") {
  CHECK(char_encode({"ab", "cd"}) == Sentence{"a", "b", "▁", "c", "d"});
  CHECK(char_encode({}).empty());
  CHECK(char_encode({"не", "сум"}) == Sentence{"н", "е", "▁", "с", "у", "м"});
}

TEST_CASE("char_encode rejects the marker and names the token") {
  try {
    char_encode({"ok", "a▁b"});
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("a▁b") != std::string::npos);
  }
}

TEST_CASE("char_decode") {
  CHECK(char_decode({"a", "b", "▁", "c", "d"}) == Sentence{"ab", "cd"});
  CHECK(char_decode({"▁", "a"}) == Sentence{"a"});
  CHECK(char_decode({"a"}) == Sentence{"a"});
  CHECK(char_decode({"a", "▁", "▁", "b", "▁"}) == Sentence{"a", "b"});
  CHECK(char_decode({}).empty());
}

TEST_CASE("char_decode_marked flags a word when any character is flagged") {
  MarkedSentence chars{{"a", "b", "▁", "c", "▁", "d"}, {false, true, false, false, false, false}};
  const auto words = char_decode_marked(chars);
  CHECK(words.tokens == Sentence{"ab", "c", "d"});
  CHECK(words.oov == std::vector<bool>{true, false, false});
}

TEST_CASE("custom space marker") {
  CharEncoding enc;
  enc.space_marker = "_";
  CHECK(char_encode({"x", "y"}, enc) == Sentence{"x", "_", "y"});
  CHECK(char_decode({"x", "_", "y"}, enc) == Sentence{"x", "y"});
}

TEST_CASE("property: char round trip on random sentences") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = testgen::random_words(rng, 0, 8, testgen::cyrillic_alphabet());
    CHECK(char_decode(char_encode(s)) == s);
  }
}

TEST_CASE("ngram_encode") {
  CHECK(ngram_encode({"a", "b", "c"}, 2) == Sentence{"ab", "bc", "c"});
  CHECK(ngram_encode({"a", "b", "c"}, 1) == Sentence{"a", "b", "c"});
  CHECK(ngram_encode({"a", "b", "c"}, 5) == Sentence{"abc", "bc", "c"});
  CHECK(ngram_encode({}, 3).empty());
  CHECK_THROWS_AS(ngram_encode({"a"}, 0), std::invalid_argument);
}

TEST_CASE("property: ngram_encode keeps positions, vocabulary grows with n") {
  Rng rng(12);
  std::vector<Sentence> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(char_encode(testgen::random_words(rng, 1, 6, {"а", "б", "в", "г"})));
  std::size_t previous = 0;
  for (int n = 1; n <= 10; ++n) {
    std::vector<Sentence> encoded;
    for (const auto& s : corpus) {
      const auto e = ngram_encode(s, n);
      REQUIRE(e.size() == s.size());
      for (std::size_t i = 0; i < s.size(); ++i) CHECK(utf8_chars(e[i]).front() == s[i]);
      encoded.push_back(e);
    }
    const auto v = vocabulary_size(encoded);
    CHECK(v >= previous);
    previous = v;
  }
}

TEST_CASE("utf8_chars rejects malformed input") {
  CHECK(utf8_chars("ќе") == std::vector<std::string>{"ќ", "е"});
  CHECK_THROWS_AS(utf8_chars(std::string("\xff")), std::invalid_argument);
  CHECK_THROWS_AS(utf8_chars(std::string("\xd0")), std::invalid_argument);
}

TEST_CASE("filter_same_language") {
  Bitext same{"mk", "bg", {{{"a", "b", "c", "d"}, {"a", "b", "c", "d"}}}};
  const auto d1 = filter_same_language(same);
  CHECK_FALSE(d1.keep);
  CHECK(d1.bleu == doctest::Approx(1.0));
  Bitext disjoint{"mk", "bg", {{{"a", "b"}, {"c", "d"}}}};
  const auto d2 = filter_same_language(disjoint);
  CHECK(d2.keep);
  CHECK(d2.bleu == 0.0);
  CHECK(filter_same_language(Bitext{}).keep);
}

TEST_CASE("filter_charset") {
  Bitext b{"mk", "bg", {{{"ќе"}, {"ще"}}, {{"да"}, {"да"}}}};
  ForbiddenChars f;
  f.source = {"ќ"};
  const auto out = filter_charset(b, f);
  REQUIRE(out.size() == 1);
  CHECK(out.pairs[0].source == Sentence{"да"});
  CHECK(filter_charset(b, {}).size() == 2);

  const auto mk_bg = macedonian_bulgarian_filter(true);
  CHECK(mk_bg.source.count("щ") == 1);
  CHECK(mk_bg.target.count("ќ") == 1);
  CHECK(filter_charset(b, mk_bg).size() == 2);
  Bitext swapped{"mk", "bg", {{{"ще"}, {"ќе"}}, {{"да"}, {"да"}}}};
  CHECK(filter_charset(swapped, mk_bg).size() == 1);
}

TEST_CASE("letter sets are disjoint") {
  for (const auto& c : macedonian_specific_letters()) CHECK(bulgarian_specific_letters().count(c) == 0);
}

TEST_CASE("property: filters only remove pairs") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Bitext b;
    for (int i = 0; i < 20; ++i) {
      b.pairs.push_back({testgen::random_words(rng, 1, 4, {"а", "щ", "ќ", "е"}),
                         testgen::random_words(rng, 1, 4, {"а", "щ", "ќ", "е"})});
    }
    const auto out = filter_charset(b, macedonian_bulgarian_filter(trial % 2 == 0));
    std::size_t j = 0;
    for (const auto& p : b.pairs) {
      if (j < out.size() && out.pairs[j].source == p.source && out.pairs[j].target == p.target) ++j;
    }
    CHECK(j == out.size());
  }
}

TEST_CASE("subset") {
  Bitext b;
  for (int i = 0; i < 30; ++i) b.pairs.push_back({{std::to_string(i)}, {std::to_string(i)}});
  CHECK(subset(b, 0, 1).empty());
  const auto all = subset(b, 30, 1);
  CHECK(all.size() == 30);
  CHECK_THROWS_AS(subset(b, 31, 1), std::invalid_argument);
  const auto a = subset(b, 10, 5);
  const auto a2 = subset(b, 10, 5);
  const auto big = subset(b, 20, 5);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(a.pairs[i].source == a2.pairs[i].source);
    CHECK(a.pairs[i].source == big.pairs[i].source);
  }
}

TEST_CASE("sentence and bitext IO") {
  std::stringstream ss;
  std::vector<Sentence> in{{"a", "b"}, {}, {"ќе"}};
  write_sentences(ss, in);
  CHECK(ss.str() == "a b\n\nќе\n");
  CHECK(read_sentences(ss) == in);
}

TEST_CASE("remove_empty_pairs") {
  Bitext b{"x", "y", {{{"a"}, {}}, {{"b"}, {"c"}}, {{}, {"d"}}}};
  const auto out = remove_empty_pairs(b);
  REQUIRE(out.size() == 1);
  CHECK(out.pairs[0].source == Sentence{"b"});
}
