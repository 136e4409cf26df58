#include "charpivot/phrase_table.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "charpivot/util.hpp"

namespace charpivot {

// ---------------------------------------------------------------------------
// extraction

std::vector<PhraseSpan> extract_phrases(const AlignmentMatrix& alignment, int max_len) {
  if (max_len < 1) throw std::invalid_argument("max phrase length must be positive");
  const int src_len = static_cast<int>(alignment.src_len());
  const int tgt_len = static_cast<int>(alignment.tgt_len());
  std::vector<std::vector<int>> src_of_tgt(tgt_len);
  std::vector<int> src_links(src_len, 0);
  for (const auto& [s, t] : alignment.links()) {
    src_of_tgt[t].push_back(s);
    ++src_links[s];
  }

  std::set<PhraseSpan> spans;
  for (int e_begin = 0; e_begin < tgt_len; ++e_begin) {
    for (int e_end = e_begin; e_end < std::min(tgt_len, e_begin + max_len); ++e_end) {
      int f_begin = src_len;
      int f_end = -1;
      for (int e = e_begin; e <= e_end; ++e) {
        for (int s : src_of_tgt[e]) {
          f_begin = std::min(f_begin, s);
          f_end = std::max(f_end, s);
        }
      }
      if (f_end < 0 || f_end - f_begin + 1 > max_len) continue;
      bool consistent = true;
      for (const auto& [s, t] : alignment.links()) {
        if (s >= f_begin && s <= f_end && (t < e_begin || t > e_end)) {
          consistent = false;
          break;
        }
      }
      if (!consistent) continue;
      // Grow the source span over unaligned neighbours.
      for (int fs = f_begin; fs >= 0 && (fs == f_begin || src_links[fs] == 0); --fs) {
        for (int fe = f_end; fe < src_len && (fe == f_end || src_links[fe] == 0); ++fe) {
          if (fe - fs + 1 > max_len) break;
          spans.insert({fs, fe + 1, e_begin, e_end + 1});
        }
      }
    }
  }
  return {spans.begin(), spans.end()};
}

std::vector<PhraseOccurrence> extract(const Sentence& src, const Sentence& tgt, const AlignmentMatrix& alignment,
                                      int max_len) {
  if (alignment.src_len() != src.size() || alignment.tgt_len() != tgt.size()) {
    throw std::invalid_argument("alignment dimensions do not match the sentence pair");
  }
  std::vector<PhraseOccurrence> out;
  for (const auto& span : extract_phrases(alignment, max_len)) {
    PhraseOccurrence occ;
    occ.source.assign(src.begin() + span.src_begin, src.begin() + span.src_end);
    occ.target.assign(tgt.begin() + span.tgt_begin, tgt.begin() + span.tgt_end);
    for (const auto& [s, t] : alignment.links()) {
      if (s >= span.src_begin && s < span.src_end && t >= span.tgt_begin && t < span.tgt_end) {
        occ.links.emplace_back(s - span.src_begin, t - span.tgt_begin);
      }
    }
    out.push_back(std::move(occ));
  }
  return out;
}

// ---------------------------------------------------------------------------
// table container and IO

void PhraseTable::add(PhrasePair pair) {
  auto& group = entries_[join(pair.source)];
  for (const auto& existing : group) {
    if (existing.target == pair.target) {
      throw std::invalid_argument("duplicate phrase pair: " + join(pair.source) + " ||| " + join(pair.target));
    }
  }
  group.push_back(std::move(pair));
  ++size_;
}

const std::vector<PhrasePair>* PhraseTable::find(const std::string& source_key) const {
  auto it = entries_.find(source_key);
  return it == entries_.end() ? nullptr : &it->second;
}

void PhraseTable::write(std::ostream& out) const {
  for (const auto& [key, group] : entries_) {
    std::vector<const PhrasePair*> sorted;
    for (const auto& p : group) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->target < b->target; });
    for (const auto* p : sorted) {
      out << key << " ||| " << join(p->target) << " ||| " << format_double(p->scores.phi_src_given_tgt) << ' '
          << format_double(p->scores.lex_src_given_tgt) << ' ' << format_double(p->scores.phi_tgt_given_src) << ' '
          << format_double(p->scores.lex_tgt_given_src) << " ||| " << p->source_count << ' ' << p->target_count
          << ' ' << p->joint_count << '\n';
    }
  }
}

void PhraseTable::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out);
}

PhraseTable PhraseTable::read(std::istream& in, std::uint64_t corpus_size) {
  PhraseTable table(1, corpus_size);
  std::string line;
  std::size_t line_no = 0;
  int longest = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line, " ||| ");
    const auto fail = [&](const std::string& what) {
      throw std::runtime_error("phrase table line " + std::to_string(line_no) + ": " + what);
    };
    if (fields.size() != 4) fail("expected 4 fields");
    PhrasePair pair;
    pair.source = split_whitespace(fields[0]);
    pair.target = split_whitespace(fields[1]);
    if (pair.source.empty() || pair.target.empty()) fail("empty phrase");
    const auto scores = split_whitespace(fields[2]);
    const auto counts = split_whitespace(fields[3]);
    if (scores.size() != 4) fail("expected 4 scores");
    if (counts.size() != 3) fail("expected 3 counts");
    try {
      pair.scores = {std::stod(scores[0]), std::stod(scores[1]), std::stod(scores[2]), std::stod(scores[3])};
      pair.source_count = std::stoull(counts[0]);
      pair.target_count = std::stoull(counts[1]);
      pair.joint_count = std::stoull(counts[2]);
    } catch (const std::logic_error&) {
      fail("malformed number");
    }
    longest = std::max(longest, static_cast<int>(std::max(pair.source.size(), pair.target.size())));
    table.add(std::move(pair));
  }
  table.max_phrase_length_ = longest;
  return table;
}

PhraseTable PhraseTable::read(const std::filesystem::path& path, std::uint64_t corpus_size) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read(in, corpus_size);
}

// ---------------------------------------------------------------------------
// scoring

std::pair<LexTable, LexTable> lexical_tables_from_alignments(const Bitext& bitext,
                                                            std::span<const AlignmentMatrix> alignments) {
  if (alignments.size() != bitext.size()) throw std::invalid_argument("alignment count does not match bitext");
  std::map<std::pair<std::string, std::string>, double> st;  // (src, tgt)
  std::map<std::pair<std::string, std::string>, double> ts;  // (tgt, src)
  const std::string null(LexTable::kNull);
  for (std::size_t k = 0; k < bitext.size(); ++k) {
    const auto& src = bitext.pairs[k].source;
    const auto& tgt = bitext.pairs[k].target;
    const auto& a = alignments[k];
    if (a.src_len() != src.size() || a.tgt_len() != tgt.size()) {
      throw std::invalid_argument("alignment dimensions do not match pair " + std::to_string(k));
    }
    std::vector<bool> src_linked(src.size(), false);
    std::vector<bool> tgt_linked(tgt.size(), false);
    for (const auto& [s, t] : a.links()) {
      st[{src[s], tgt[t]}] += 1.0;
      ts[{tgt[t], src[s]}] += 1.0;
      src_linked[s] = true;
      tgt_linked[t] = true;
    }
    for (std::size_t s = 0; s < src.size(); ++s) {
      if (!src_linked[s]) st[{src[s], null}] += 1.0;
    }
    for (std::size_t t = 0; t < tgt.size(); ++t) {
      if (!tgt_linked[t]) ts[{tgt[t], null}] += 1.0;
    }
  }
  std::vector<std::tuple<std::string, std::string, double>> st_counts;
  std::vector<std::tuple<std::string, std::string, double>> ts_counts;
  for (const auto& [k, c] : st) st_counts.emplace_back(k.first, k.second, c);
  for (const auto& [k, c] : ts) ts_counts.emplace_back(k.first, k.second, c);
  return {LexTable::from_counts(st_counts), LexTable::from_counts(ts_counts)};
}

double lexical_weight(const Sentence& words, const Sentence& given, const std::vector<std::pair<int, int>>& links,
                      const LexTable& table, double floor) {
  std::vector<std::vector<int>> aligned(words.size());
  for (const auto& [w, g] : links) {
    if (w < 0 || g < 0 || static_cast<std::size_t>(w) >= words.size() ||
        static_cast<std::size_t>(g) >= given.size()) {
      throw std::out_of_range("lexical weight link outside the phrase");
    }
    aligned[w].push_back(g);
  }
  double weight = 1.0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (aligned[i].empty()) {
      weight *= table.prob_or(words[i], LexTable::kNull, floor);
      continue;
    }
    double sum = 0.0;
    for (int g : aligned[i]) sum += table.prob_or(words[i], given[g], floor);
    weight *= sum / static_cast<double>(aligned[i].size());
  }
  return weight;
}

namespace {

struct Aggregate {
  std::uint64_t count = 0;
  double lex_src_given_tgt = 0.0;
  double lex_tgt_given_src = 0.0;
};

using AggregateMap = std::unordered_map<std::string, Aggregate>;  // "src\ttgt"

void accumulate(AggregateMap& agg, const PhraseOccurrence& occ, const LexTable& src_given_tgt,
                const LexTable& tgt_given_src, double floor) {
  std::vector<std::pair<int, int>> swapped;
  swapped.reserve(occ.links.size());
  for (const auto& [s, t] : occ.links) swapped.emplace_back(t, s);
  const double lex_st = lexical_weight(occ.source, occ.target, occ.links, src_given_tgt, floor);
  const double lex_ts = lexical_weight(occ.target, occ.source, swapped, tgt_given_src, floor);
  auto& a = agg[join(occ.source) + '\t' + join(occ.target)];
  ++a.count;
  a.lex_src_given_tgt = std::max(a.lex_src_given_tgt, lex_st);
  a.lex_tgt_given_src = std::max(a.lex_tgt_given_src, lex_ts);
}

void merge_into(AggregateMap& into, const AggregateMap& from) {
  for (const auto& [key, a] : from) {
    auto& b = into[key];
    b.count += a.count;
    b.lex_src_given_tgt = std::max(b.lex_src_given_tgt, a.lex_src_given_tgt);
    b.lex_tgt_given_src = std::max(b.lex_tgt_given_src, a.lex_tgt_given_src);
  }
}

PhraseTable finalize(const AggregateMap& agg, int max_phrase_length) {
  std::vector<const std::pair<const std::string, Aggregate>*> items;
  items.reserve(agg.size());
  std::unordered_map<std::string, std::uint64_t> src_total;
  std::unordered_map<std::string, std::uint64_t> tgt_total;
  for (const auto& item : agg) {
    items.push_back(&item);
    const auto tab = item.first.find('\t');
    src_total[item.first.substr(0, tab)] += item.second.count;
    tgt_total[item.first.substr(tab + 1)] += item.second.count;
  }
  std::sort(items.begin(), items.end(), [](auto* a, auto* b) { return a->first < b->first; });

  PhraseTable table(max_phrase_length, 0);
  for (const auto* item : items) {
    const auto tab = item->first.find('\t');
    const std::string src_key = item->first.substr(0, tab);
    const std::string tgt_key = item->first.substr(tab + 1);
    PhrasePair pair;
    pair.source = split_whitespace(src_key);
    pair.target = split_whitespace(tgt_key);
    const double c = static_cast<double>(item->second.count);
    pair.scores.phi_src_given_tgt = c / static_cast<double>(tgt_total.at(tgt_key));
    pair.scores.phi_tgt_given_src = c / static_cast<double>(src_total.at(src_key));
    pair.scores.lex_src_given_tgt = item->second.lex_src_given_tgt;
    pair.scores.lex_tgt_given_src = item->second.lex_tgt_given_src;
    table.add(std::move(pair));
  }
  return table;
}

}  // namespace

PhraseTable score_phrases(std::span<const PhraseOccurrence> occurrences, const LexTable& src_given_tgt,
                          const LexTable& tgt_given_src, int max_phrase_length) {
  AggregateMap agg;
  for (const auto& occ : occurrences) accumulate(agg, occ, src_given_tgt, tgt_given_src, 1e-7);
  return finalize(agg, max_phrase_length);
}

namespace {

// For every phrase in `index`, the sorted list of sentences containing it.
std::vector<std::vector<std::uint32_t>> postings(std::span<const Sentence> side,
                                                 const std::unordered_map<std::string, std::uint32_t>& index,
                                                 int max_len) {
  std::vector<std::vector<std::uint32_t>> lists(index.size());
  for (std::size_t k = 0; k < side.size(); ++k) {
    const auto& sent = side[k];
    const auto id = static_cast<std::uint32_t>(k);
    for (std::size_t i = 0; i < sent.size(); ++i) {
      std::string key;
      for (std::size_t j = i; j < sent.size() && j < i + static_cast<std::size_t>(max_len); ++j) {
        if (j > i) key += ' ';
        key += sent[j];
        auto it = index.find(key);
        if (it == index.end()) continue;
        auto& list = lists[it->second];
        if (list.empty() || list.back() != id) list.push_back(id);
      }
    }
  }
  return lists;
}

std::uint64_t intersection_size(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::uint64_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

}  // namespace

PhraseTable build_phrase_table(const Bitext& bitext, std::span<const AlignmentMatrix> alignments,
                               const PhraseTableOptions& options) {
  if (bitext.empty()) throw std::invalid_argument("cannot build a phrase table from an empty bitext");
  const auto [src_given_tgt, tgt_given_src] = lexical_tables_from_alignments(bitext, alignments);

  constexpr std::size_t kChunks = 8;
  std::vector<AggregateMap> partial(kChunks);
  const std::size_t n = bitext.size();
  parallel_for(kChunks, options.jobs, [&](std::size_t c) {
    for (std::size_t k = c * n / kChunks; k < (c + 1) * n / kChunks; ++k) {
      const auto& pair = bitext.pairs[k];
      for (const auto& occ : extract(pair.source, pair.target, alignments[k], options.max_phrase_length)) {
        accumulate(partial[c], occ, src_given_tgt, tgt_given_src, options.lex_floor);
      }
    }
  });
  AggregateMap agg = std::move(partial[0]);
  for (std::size_t c = 1; c < kChunks; ++c) merge_into(agg, partial[c]);
  PhraseTable scored = finalize(agg, options.max_phrase_length);

  // Sentence-level co-occurrence counts.
  std::unordered_map<std::string, std::uint32_t> src_index;
  std::unordered_map<std::string, std::uint32_t> tgt_index;
  for (const auto& [key, group] : scored.groups()) {
    src_index.emplace(key, static_cast<std::uint32_t>(src_index.size()));
    for (const auto& p : group) tgt_index.emplace(join(p.target), static_cast<std::uint32_t>(tgt_index.size()));
  }
  const auto src_side = bitext.source_side();
  const auto tgt_side = bitext.target_side();
  const auto src_post = postings(src_side, src_index, options.max_phrase_length);
  const auto tgt_post = postings(tgt_side, tgt_index, options.max_phrase_length);

  PhraseTable table(options.max_phrase_length, n);
  for (const auto& [key, group] : scored.groups()) {
    const auto& sp = src_post[src_index.at(key)];
    for (const auto& p : group) {
      PhrasePair out = p;
      const auto& tp = tgt_post[tgt_index.at(join(p.target))];
      out.source_count = sp.size();
      out.target_count = tp.size();
      out.joint_count = intersection_size(sp, tp);
      table.add(std::move(out));
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// significance

namespace {

long double log_factorial(std::uint64_t n) {
  thread_local std::vector<long double> table{0.0L};
  if (n < (1u << 22)) {
    while (table.size() <= n) {
      table.push_back(table.back() + std::log(static_cast<long double>(table.size())));
    }
    return table[n];
  }
  return std::lgamma(static_cast<long double>(n) + 1.0L);
}

long double log_choose(std::uint64_t n, std::uint64_t k) {
  return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
}

}  // namespace

double fisher_log_p_value(std::uint64_t joint, std::uint64_t source_count, std::uint64_t target_count,
                          std::uint64_t corpus_size) {
  const std::uint64_t N = corpus_size;
  const std::uint64_t K = source_count;
  const std::uint64_t n = target_count;
  if (K > N || n > N || joint > std::min(K, n)) {
    throw std::invalid_argument("inconsistent contingency counts");
  }
  const std::uint64_t lo = std::max<std::uint64_t>(joint, n + K > N ? n + K - N : 0);
  const std::uint64_t hi = std::min(K, n);
  const long double denom = log_choose(N, n);
  std::vector<long double> terms;
  for (std::uint64_t k = lo; k <= hi; ++k) {
    terms.push_back(log_choose(K, k) + log_choose(N - K, n - k) - denom);
  }
  const long double top = *std::max_element(terms.begin(), terms.end());
  long double sum = 0.0L;
  for (long double t : terms) sum += std::exp(t - top);
  return std::min(0.0, static_cast<double>(top + std::log(sum)));
}

double significance_threshold(std::uint64_t corpus_size, double epsilon) {
  if (corpus_size == 0) throw std::invalid_argument("corpus size must be positive");
  return -fisher_log_p_value(1, 1, 1, corpus_size) + epsilon;
}

PhraseTable prune_significance(const PhraseTable& table, double epsilon) {
  const std::uint64_t N = table.corpus_size();
  const double threshold = significance_threshold(N, epsilon);
  PhraseTable out(table.max_phrase_length(), N);
  for (const auto& [key, group] : table.groups()) {
    for (const auto& p : group) {
      if (p.source_count > N || p.target_count > N) {
        throw std::invalid_argument("phrase count exceeds corpus size for: " + key);
      }
      if (-fisher_log_p_value(p.joint_count, p.source_count, p.target_count, N) > threshold) out.add(p);
    }
  }
  return out;
}

}  // namespace charpivot
