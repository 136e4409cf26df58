#include "charpivot/text.hpp"

#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "charpivot/metrics.hpp"
#include "charpivot/util.hpp"

namespace charpivot {

std::vector<Sentence> Bitext::source_side() const {
  std::vector<Sentence> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.source);
  return out;
}

std::vector<Sentence> Bitext::target_side() const {
  std::vector<Sentence> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.target);
  return out;
}

Bitext Bitext::reversed() const {
  Bitext out{target_lang, source_lang, {}};
  out.pairs.reserve(pairs.size());
  for (const auto& p : pairs) out.pairs.push_back({p.target, p.source});
  return out;
}

std::string_view to_string(Level level) { return level == Level::word ? "word" : "char"; }

Level parse_level(std::string_view text) {
  if (text == "word") return Level::word;
  if (text == "char" || text == "character") return Level::character;
  throw std::invalid_argument("unknown level '" + std::string(text) + "' (expected word or char)");
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len;
    if (lead < 0x80) {
      len = 1;
    } else if ((lead >> 5) == 0x6) {
      len = 2;
    } else if ((lead >> 4) == 0xe) {
      len = 3;
    } else if ((lead >> 3) == 0x1e) {
      len = 4;
    } else {
      throw std::invalid_argument("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > text.size()) throw std::invalid_argument("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) >> 6) != 0x2) {
        throw std::invalid_argument("invalid UTF-8 continuation byte at offset " + std::to_string(i + k));
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

Sentence char_encode(const Sentence& words, const CharEncoding& enc) {
  Sentence out;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w].find(enc.space_marker) != std::string::npos) {
      throw std::invalid_argument("token '" + words[w] + "' contains the reserved space marker '" +
                                  enc.space_marker + "'");
    }
    if (w > 0) out.push_back(enc.space_marker);
    for (auto& c : utf8_chars(words[w])) out.push_back(std::move(c));
  }
  return out;
}

MarkedSentence char_decode_marked(const MarkedSentence& chars, const CharEncoding& enc) {
  const bool has_flags = chars.oov.size() == chars.tokens.size();
  MarkedSentence out;
  std::string word;
  bool flagged = false;
  auto flush = [&] {
    if (!word.empty()) {
      out.tokens.push_back(std::move(word));
      out.oov.push_back(flagged);
    }
    word.clear();
    flagged = false;
  };
  for (std::size_t i = 0; i < chars.tokens.size(); ++i) {
    if (chars.tokens[i] == enc.space_marker) {
      flush();
      continue;
    }
    word += chars.tokens[i];
    if (has_flags && chars.oov[i]) flagged = true;
  }
  flush();
  if (!has_flags) out.oov.clear();
  return out;
}

Sentence char_decode(const Sentence& chars, const CharEncoding& enc) {
  return char_decode_marked(MarkedSentence{chars, {}}, enc).tokens;
}

Sentence ngram_encode(const Sentence& chars, int n) {
  if (n < 1) throw std::invalid_argument("n-gram order must be >= 1, got " + std::to_string(n));
  Sentence out;
  out.reserve(chars.size());
  for (std::size_t i = 0; i < chars.size(); ++i) {
    std::string gram;
    for (std::size_t k = i; k < std::min(chars.size(), i + static_cast<std::size_t>(n)); ++k) gram += chars[k];
    out.push_back(std::move(gram));
  }
  return out;
}

std::size_t vocabulary_size(std::span<const Sentence> corpus) {
  std::unordered_set<std::string_view> types;
  for (const auto& s : corpus) {
    for (const auto& t : s) types.insert(t);
  }
  return types.size();
}

SameLanguageDecision filter_same_language(const Bitext& document, double threshold) {
  if (document.empty()) return {true, 0.0};
  const auto src = document.source_side();
  const auto tgt = document.target_side();
  const double bleu = corpus_bleu(src, tgt).bleu / 100.0;
  return {!(bleu > threshold), bleu};
}

std::set<std::string> macedonian_specific_letters() {
  return {"ѓ", "ѕ", "ј", "љ", "њ", "ќ", "џ", "Ѓ", "Ѕ", "Ј", "Љ", "Њ", "Ќ", "Џ"};
}

std::set<std::string> bulgarian_specific_letters() {
  return {"й", "щ", "ъ", "ь", "ю", "я", "Й", "Щ", "Ъ", "Ь", "Ю", "Я"};
}

ForbiddenChars macedonian_bulgarian_filter(bool source_is_macedonian) {
  if (source_is_macedonian) return {bulgarian_specific_letters(), macedonian_specific_letters()};
  return {macedonian_specific_letters(), bulgarian_specific_letters()};
}

namespace {

bool contains_any(const Sentence& s, const std::set<std::string>& forbidden) {
  if (forbidden.empty()) return false;
  for (const auto& token : s) {
    for (const auto& c : utf8_chars(token)) {
      if (forbidden.contains(c)) return true;
    }
  }
  return false;
}

}  // namespace

Bitext filter_charset(const Bitext& bitext, const ForbiddenChars& forbidden) {
  Bitext out{bitext.source_lang, bitext.target_lang, {}};
  for (const auto& p : bitext.pairs) {
    if (contains_any(p.source, forbidden.source) || contains_any(p.target, forbidden.target)) continue;
    out.pairs.push_back(p);
  }
  return out;
}

Bitext remove_empty_pairs(const Bitext& bitext) {
  Bitext out{bitext.source_lang, bitext.target_lang, {}};
  for (const auto& p : bitext.pairs) {
    if (!p.source.empty() && !p.target.empty()) out.pairs.push_back(p);
  }
  return out;
}

Bitext subset(const Bitext& bitext, std::size_t k, std::uint64_t seed) {
  if (k > bitext.size()) {
    throw std::invalid_argument("subset of " + std::to_string(k) + " pairs requested from a corpus of " +
                                std::to_string(bitext.size()));
  }
  std::vector<std::size_t> order(bitext.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  Bitext out{bitext.source_lang, bitext.target_lang, {}};
  out.pairs.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.pairs.push_back(bitext.pairs[order[i]]);
  return out;
}

std::vector<Sentence> read_sentences(std::istream& in) {
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(split_whitespace(line));
  return out;
}

std::vector<Sentence> read_sentences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_sentences(in);
}

void write_sentences(std::ostream& out, std::span<const Sentence> sentences) {
  for (const auto& s : sentences) out << join(s) << '\n';
}

void write_sentences(const std::filesystem::path& path, std::span<const Sentence> sentences) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_sentences(out, sentences);
}

Bitext read_bitext(const std::filesystem::path& source, const std::filesystem::path& target,
                   std::string source_lang, std::string target_lang) {
  auto src = read_sentences(source);
  auto tgt = read_sentences(target);
  if (src.size() != tgt.size()) {
    throw std::runtime_error("bitext sides differ in length: " + source.string() + " has " +
                             std::to_string(src.size()) + " lines, " + target.string() + " has " +
                             std::to_string(tgt.size()));
  }
  Bitext out{std::move(source_lang), std::move(target_lang), {}};
  out.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out.pairs.push_back({std::move(src[i]), std::move(tgt[i])});
  return out;
}

void write_bitext(const Bitext& bitext, const std::filesystem::path& source, const std::filesystem::path& target) {
  write_sentences(source, bitext.source_side());
  write_sentences(target, bitext.target_side());
}

}  // namespace charpivot
