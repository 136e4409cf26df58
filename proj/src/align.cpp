#include "charpivot/align.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <tuple>

#include "charpivot/util.hpp"

namespace charpivot {

// --- AlignmentMatrix

void AlignmentMatrix::add(int src, int tgt) {
  if (src < 0 || tgt < 0 || static_cast<std::size_t>(src) >= src_len_ ||
      static_cast<std::size_t>(tgt) >= tgt_len_) {
    throw std::out_of_range("link " + std::to_string(src) + "-" + std::to_string(tgt) + " outside a " +
                            std::to_string(src_len_) + "x" + std::to_string(tgt_len_) + " pair");
  }
  const std::pair<int, int> link{src, tgt};
  auto it = std::lower_bound(links_.begin(), links_.end(), link);
  if (it == links_.end() || *it != link) links_.insert(it, link);
}

bool AlignmentMatrix::contains(int src, int tgt) const {
  return std::binary_search(links_.begin(), links_.end(), std::pair<int, int>{src, tgt});
}

AlignmentMatrix AlignmentMatrix::transposed() const {
  AlignmentMatrix out(tgt_len_, src_len_);
  for (auto [s, t] : links_) out.links_.emplace_back(t, s);
  std::sort(out.links_.begin(), out.links_.end());
  return out;
}

// --- LexTable

LexTable::LexTable() { tgt_vocab_.intern(kNull); }

LexTable LexTable::from_counts(const std::vector<std::tuple<std::string, std::string, double>>& counts) {
  LexTable table;
  std::map<std::uint32_t, double> totals;
  std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> ids;
  ids.reserve(counts.size());
  for (const auto& [src, tgt, c] : counts) {
    const auto s = table.intern_src(src);
    const auto t = table.intern_tgt(tgt);
    ids.emplace_back(s, t, c);
    totals[t] += c;
  }
  std::unordered_map<std::uint64_t, double> sums;
  for (const auto& [s, t, c] : ids) sums[key(s, t)] += c;
  for (const auto& [k, c] : sums) {
    const auto t = static_cast<std::uint32_t>(k >> 32);
    table.probs_[k] = totals[t] > 0 ? c / totals[t] : 0.0;
  }
  return table;
}

double LexTable::prob_ids(std::uint32_t src, std::uint32_t tgt) const {
  auto it = probs_.find(key(src, tgt));
  return it == probs_.end() ? 0.0 : it->second;
}

double LexTable::prob(std::string_view src, std::string_view tgt) const { return prob_or(src, tgt, 0.0); }

double LexTable::prob_or(std::string_view src, std::string_view tgt, double floor) const {
  const auto s = src_vocab_.find(src);
  const auto t = tgt_vocab_.find(tgt);
  if (!s || !t) return floor;
  auto it = probs_.find(key(*s, *t));
  return it == probs_.end() ? floor : it->second;
}

double LexTable::row_sum(std::string_view tgt) const {
  const auto t = tgt_vocab_.find(tgt);
  if (!t) return 0.0;
  std::vector<double> row;
  for (const auto& [k, p] : probs_) {
    if ((k >> 32) == *t) row.push_back(p);
  }
  std::sort(row.begin(), row.end());
  double sum = 0.0;
  for (double p : row) sum += p;
  return sum;
}

void LexTable::dump(std::ostream& out) const {
  std::vector<std::tuple<std::string_view, std::string_view, double>> rows;
  rows.reserve(probs_.size());
  for (const auto& [k, p] : probs_) {
    rows.emplace_back(tgt_vocab_.token(static_cast<std::uint32_t>(k >> 32)),
                      src_vocab_.token(static_cast<std::uint32_t>(k & 0xffffffffu)), p);
  }
  std::sort(rows.begin(), rows.end());
  for (const auto& [t, s, p] : rows) out << t << ' ' << s << ' ' << format_double(p) << '\n';
}

// --- DistortionTable

int DistortionTable::bucket(int tgt, int src, int tgt_len, int src_len) {
  if (tgt < 0) return 0;
  const double diagonal = static_cast<double>(src + 1) * tgt_len / std::max(1, src_len);
  long offset = std::lround(static_cast<double>(tgt + 1) - diagonal);
  offset = std::clamp<long>(offset, -kMaxOffset, kMaxOffset);
  return static_cast<int>(offset) + kMaxOffset + 1;
}

double DistortionTable::prob(int tgt, int src, int tgt_len, int src_len, bool use_null) const {
  double z = use_null ? weights_[0] : 0.0;
  for (int i = 0; i < tgt_len; ++i) z += weights_[bucket(i, src, tgt_len, src_len)];
  if (z <= 0.0) return 0.0;
  if (tgt < 0) return use_null ? weights_[0] / z : 0.0;
  return weights_[bucket(tgt, src, tgt_len, src_len)] / z;
}

// --- EM training

namespace {

constexpr std::size_t kEmChunks = 8;

/// Sentence pairs as id arrays with a precomputed entry index per
/// (target slot, source position). Target slot 0 is NULL when enabled.
struct EmCorpus {
  struct Pair {
    std::vector<std::uint32_t> src;
    std::vector<std::uint32_t> tgt;  // includes NULL at slot 0 when enabled
    std::vector<std::uint32_t> entries;  // [slot * src.size() + j]
  };
  std::vector<Pair> pairs;
  std::vector<std::uint32_t> entry_src;
  std::vector<std::uint32_t> entry_tgt;
  bool use_null = true;
};

EmCorpus build_em_corpus(const Bitext& bitext, LexTable& lex, bool use_null) {
  EmCorpus corpus;
  corpus.use_null = use_null;
  std::unordered_map<std::uint64_t, std::uint32_t> entry_ids;
  corpus.pairs.reserve(bitext.size());
  for (const auto& p : bitext.pairs) {
    EmCorpus::Pair pair;
    for (const auto& t : p.source) pair.src.push_back(lex.intern_src(t));
    if (use_null) pair.tgt.push_back(LexTable::kNullId);
    for (const auto& t : p.target) pair.tgt.push_back(lex.intern_tgt(t));
    pair.entries.resize(pair.tgt.size() * pair.src.size());
    for (std::size_t i = 0; i < pair.tgt.size(); ++i) {
      for (std::size_t j = 0; j < pair.src.size(); ++j) {
        const std::uint64_t k = (static_cast<std::uint64_t>(pair.tgt[i]) << 32) | pair.src[j];
        auto [it, inserted] = entry_ids.emplace(k, static_cast<std::uint32_t>(corpus.entry_src.size()));
        if (inserted) {
          corpus.entry_src.push_back(pair.src[j]);
          corpus.entry_tgt.push_back(pair.tgt[i]);
        }
        pair.entries[i * pair.src.size() + j] = it->second;
      }
    }
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

struct ChunkStats {
  std::vector<double> counts;
  std::vector<double> bucket_counts;
  std::vector<double> bucket_norm;
  double log_likelihood = 0.0;
};

/// Alignment prior over target slots for source position j.
void slot_priors(const EmCorpus::Pair& pair, std::size_t j, bool use_null, const DistortionTable* distortion,
                 std::vector<double>& q, std::vector<int>& buckets, double& z) {
  const std::size_t slots = pair.tgt.size();
  const int tgt_len = static_cast<int>(slots) - (use_null ? 1 : 0);
  const int src_len = static_cast<int>(pair.src.size());
  q.assign(slots, 0.0);
  buckets.assign(slots, 0);
  if (!distortion) {
    for (auto& v : q) v = 1.0 / static_cast<double>(slots);
    z = 1.0;
    return;
  }
  z = 0.0;
  for (std::size_t i = 0; i < slots; ++i) {
    const int tgt = use_null ? static_cast<int>(i) - 1 : static_cast<int>(i);
    buckets[i] = DistortionTable::bucket(tgt, static_cast<int>(j), tgt_len, src_len);
    q[i] = distortion->weights()[buckets[i]];
    z += q[i];
  }
  for (auto& v : q) v /= z;
}

ChunkStats e_step_chunk(const EmCorpus& corpus, std::size_t begin, std::size_t end, const std::vector<double>& t,
                        const DistortionTable* distortion, bool collect) {
  ChunkStats stats;
  if (collect) {
    stats.counts.assign(t.size(), 0.0);
    if (distortion) {
      stats.bucket_counts.assign(DistortionTable::kBuckets, 0.0);
      stats.bucket_norm.assign(DistortionTable::kBuckets, 0.0);
    }
  }
  std::vector<double> q, post;
  std::vector<int> buckets;
  for (std::size_t p = begin; p < end; ++p) {
    const auto& pair = corpus.pairs[p];
    const std::size_t m = pair.src.size();
    const std::size_t slots = pair.tgt.size();
    if (slots == 0) continue;
    for (std::size_t j = 0; j < m; ++j) {
      double z_dist = 1.0;
      slot_priors(pair, j, corpus.use_null, distortion, q, buckets, z_dist);
      post.assign(slots, 0.0);
      double z = 0.0;
      for (std::size_t i = 0; i < slots; ++i) {
        post[i] = q[i] * t[pair.entries[i * m + j]];
        z += post[i];
      }
      stats.log_likelihood += std::log(z);
      if (!collect) continue;
      for (std::size_t i = 0; i < slots; ++i) {
        const double r = post[i] / z;
        stats.counts[pair.entries[i * m + j]] += r;
        if (distortion) {
          stats.bucket_counts[buckets[i]] += r;
          stats.bucket_norm[buckets[i]] += 1.0 / z_dist;
        }
      }
    }
  }
  return stats;
}

/// E-step over fixed chunks reduced in chunk order, so the result does not
/// depend on the number of worker threads.
ChunkStats e_step(const EmCorpus& corpus, const std::vector<double>& t, const DistortionTable* distortion,
                  bool collect, int jobs) {
  const std::size_t n = corpus.pairs.size();
  const std::size_t chunks = std::min(kEmChunks, n);
  std::vector<ChunkStats> parts(chunks);
  parallel_for(chunks, jobs, [&](std::size_t c) {
    parts[c] = e_step_chunk(corpus, c * n / chunks, (c + 1) * n / chunks, t, distortion, collect);
  });
  ChunkStats total = std::move(parts[0]);
  for (std::size_t c = 1; c < chunks; ++c) {
    total.log_likelihood += parts[c].log_likelihood;
    if (!collect) continue;
    for (std::size_t e = 0; e < total.counts.size(); ++e) total.counts[e] += parts[c].counts[e];
    for (std::size_t b = 0; b < total.bucket_counts.size(); ++b) {
      total.bucket_counts[b] += parts[c].bucket_counts[b];
      total.bucket_norm[b] += parts[c].bucket_norm[b];
    }
  }
  return total;
}

void m_step(const EmCorpus& corpus, const ChunkStats& stats, std::vector<double>& t, std::size_t tgt_vocab,
            DistortionTable* distortion) {
  std::vector<double> totals(tgt_vocab, 0.0);
  for (std::size_t e = 0; e < t.size(); ++e) totals[corpus.entry_tgt[e]] += stats.counts[e];
  for (std::size_t e = 0; e < t.size(); ++e) {
    const double total = totals[corpus.entry_tgt[e]];
    t[e] = total > 0.0 ? stats.counts[e] / total : 0.0;
  }
  if (distortion) {
    // Minorize-maximize update for the ratio-normalized bucket weights; each
    // step increases the expected complete-data likelihood.
    auto& w = distortion->weights();
    for (int b = 0; b < DistortionTable::kBuckets; ++b) {
      if (stats.bucket_norm[b] > 0.0) w[b] = stats.bucket_counts[b] / stats.bucket_norm[b];
    }
  }
}

}  // namespace

AlignmentModel em_train(const Bitext& bitext, const EmOptions& options) {
  if (bitext.empty()) throw std::invalid_argument("EM training on an empty bitext");
  const int ibm2_iterations = options.model == AlignModel::ibm2 ? options.ibm2_iterations : 0;
  if (options.ibm1_iterations < 0 || ibm2_iterations < 0 || options.ibm1_iterations + ibm2_iterations < 1) {
    throw std::invalid_argument("EM training needs at least one iteration");
  }
  AlignmentModel model;
  model.use_null = options.use_null;
  model.floor = options.floor;
  const EmCorpus corpus = build_em_corpus(bitext, model.lex, options.use_null);

  const double uniform = 1.0 / static_cast<double>(std::max<std::size_t>(1, model.lex.src_vocab().size()));
  std::vector<double> t(corpus.entry_src.size(), uniform);
  const std::size_t tgt_vocab = model.lex.tgt_vocab().size();

  for (int it = 0; it < options.ibm1_iterations; ++it) {
    ChunkStats stats = e_step(corpus, t, nullptr, true, options.jobs);
    model.log_likelihood.push_back(stats.log_likelihood);
    m_step(corpus, stats, t, tgt_vocab, nullptr);
  }
  if (ibm2_iterations > 0) {
    // Uniform bucket weights reproduce the Model 1 prior exactly.
    model.distortion.emplace();
    for (int it = 0; it < ibm2_iterations; ++it) {
      ChunkStats stats = e_step(corpus, t, &*model.distortion, true, options.jobs);
      model.log_likelihood.push_back(stats.log_likelihood);
      m_step(corpus, stats, t, tgt_vocab, &*model.distortion);
    }
  }
  const ChunkStats final_stats =
      e_step(corpus, t, model.distortion ? &*model.distortion : nullptr, false, options.jobs);
  model.log_likelihood.push_back(final_stats.log_likelihood);

  for (std::size_t e = 0; e < t.size(); ++e) model.lex.set_ids(corpus.entry_src[e], corpus.entry_tgt[e], t[e]);
  return model;
}

namespace {

std::vector<double> slot_scores(const AlignmentModel& model, std::size_t j, const std::vector<std::optional<std::uint32_t>>& src,
                                const std::vector<std::optional<std::uint32_t>>& tgt) {
  const int tgt_len = static_cast<int>(tgt.size());
  const int src_len = static_cast<int>(src.size());
  const std::size_t slots = tgt.size() + (model.use_null ? 1 : 0);
  std::vector<double> scores(slots, 0.0);
  // Unnormalized distortion weights per slot; same values as DistortionTable::prob.
  std::vector<double> q(slots, 1.0);
  double z = static_cast<double>(slots);
  if (model.distortion) {
    const auto& w = model.distortion->weights();
    z = 0.0;
    for (std::size_t slot = 0; slot < slots; ++slot) {
      const int i = model.use_null ? static_cast<int>(slot) - 1 : static_cast<int>(slot);
      q[slot] = w[DistortionTable::bucket(i, static_cast<int>(j), tgt_len, src_len)];
      z += q[slot];
    }
  }
  for (std::size_t slot = 0; slot < slots; ++slot) {
    const int i = model.use_null ? static_cast<int>(slot) - 1 : static_cast<int>(slot);
    const double qs = z > 0.0 ? q[slot] / z : 0.0;
    const std::optional<std::uint32_t> e = i < 0 ? std::optional<std::uint32_t>(LexTable::kNullId) : tgt[i];
    double t = model.floor;
    if (src[j] && e) {
      const double p = model.lex.prob_ids(*src[j], *e);
      if (p > 0.0) t = p;
    }
    scores[slot] = qs * t;
  }
  return scores;
}

}  // namespace

double corpus_log_likelihood(const AlignmentModel& model, const Bitext& bitext) {
  double ll = 0.0;
  for (const auto& p : bitext.pairs) {
    std::vector<std::optional<std::uint32_t>> src, tgt;
    for (const auto& t : p.source) src.push_back(model.lex.src_id(t));
    for (const auto& t : p.target) tgt.push_back(model.lex.tgt_id(t));
    if (tgt.empty() && !model.use_null) continue;
    for (std::size_t j = 0; j < src.size(); ++j) {
      double z = 0.0;
      for (double s : slot_scores(model, j, src, tgt)) z += s;
      ll += std::log(z);
    }
  }
  return ll;
}

AlignmentMatrix viterbi_align(const AlignmentModel& model, const Sentence& src, const Sentence& tgt) {
  AlignmentMatrix out(src.size(), tgt.size());
  std::vector<std::optional<std::uint32_t>> src_ids, tgt_ids;
  src_ids.reserve(src.size());
  tgt_ids.reserve(tgt.size());
  for (const auto& t : src) src_ids.push_back(model.lex.src_id(t));
  for (const auto& t : tgt) tgt_ids.push_back(model.lex.tgt_id(t));
  for (std::size_t j = 0; j < src.size(); ++j) {
    const auto scores = slot_scores(model, j, src_ids, tgt_ids);
    std::size_t best = 0;
    for (std::size_t slot = 1; slot < scores.size(); ++slot) {
      if (scores[slot] > scores[best]) best = slot;
    }
    if (scores.empty()) continue;
    const int i = model.use_null ? static_cast<int>(best) - 1 : static_cast<int>(best);
    if (i >= 0) out.add(static_cast<int>(j), i);
  }
  return out;
}

// --- symmetrization

AlignmentMatrix symmetrize_gdfa(const AlignmentMatrix& fwd, const AlignmentMatrix& rev) {
  if (fwd.src_len() != rev.src_len() || fwd.tgt_len() != rev.tgt_len()) {
    throw std::invalid_argument("symmetrize: alignment dimensions differ (" + std::to_string(fwd.src_len()) + "x" +
                                std::to_string(fwd.tgt_len()) + " vs " + std::to_string(rev.src_len()) + "x" +
                                std::to_string(rev.tgt_len()) + ")");
  }
  const int src_len = static_cast<int>(fwd.src_len());
  const int tgt_len = static_cast<int>(fwd.tgt_len());
  std::vector<char> in_union(static_cast<std::size_t>(src_len) * tgt_len, 0);
  std::vector<char> in_fwd(in_union.size(), 0);
  std::vector<char> in_result(in_union.size(), 0);
  std::vector<char> src_aligned(src_len, 0), tgt_aligned(tgt_len, 0);
  auto at = [tgt_len](int s, int t) { return static_cast<std::size_t>(s) * tgt_len + t; };

  for (auto [s, t] : fwd.links()) {
    in_union[at(s, t)] = 1;
    in_fwd[at(s, t)] = 1;
  }
  for (auto [s, t] : rev.links()) {
    if (in_fwd[at(s, t)]) {
      in_result[at(s, t)] = 1;
      src_aligned[s] = tgt_aligned[t] = 1;
    }
    in_union[at(s, t)] = 1;
  }

  static constexpr int kNeighbors[8][2] = {{-1, 0}, {0, -1}, {1, 0}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  bool added = true;
  while (added) {
    added = false;
    for (int s = 0; s < src_len; ++s) {
      for (int t = 0; t < tgt_len; ++t) {
        if (!in_result[at(s, t)]) continue;
        for (const auto& d : kNeighbors) {
          const int ns = s + d[0], nt = t + d[1];
          if (ns < 0 || nt < 0 || ns >= src_len || nt >= tgt_len) continue;
          if (in_result[at(ns, nt)] || !in_union[at(ns, nt)]) continue;
          if (!src_aligned[ns] || !tgt_aligned[nt]) {
            in_result[at(ns, nt)] = 1;
            src_aligned[ns] = tgt_aligned[nt] = 1;
            added = true;
          }
        }
      }
    }
  }

  // final-and: forward links first, then reverse links.
  for (const AlignmentMatrix* directional : {&fwd, &rev}) {
    for (auto [s, t] : directional->links()) {
      if (!src_aligned[s] && !tgt_aligned[t]) {
        in_result[at(s, t)] = 1;
        src_aligned[s] = tgt_aligned[t] = 1;
      }
    }
  }

  AlignmentMatrix out(fwd.src_len(), fwd.tgt_len());
  for (int s = 0; s < src_len; ++s) {
    for (int t = 0; t < tgt_len; ++t) {
      if (in_result[at(s, t)]) out.add(s, t);
    }
  }
  return out;
}

AlignmentMatrix ngram_links_to_char_links(const AlignmentMatrix& ngram_alignment) { return ngram_alignment; }

std::size_t alignment_point_count(std::span<const AlignmentMatrix> alignments) {
  std::size_t total = 0;
  for (const auto& a : alignments) total += a.size();
  return total;
}

CorpusAlignment align_corpus(const Bitext& bitext, const AlignOptions& options) {
  if (options.ngram_order < 1) throw std::invalid_argument("alignment n-gram order must be >= 1");
  Bitext encoded = bitext;
  if (options.ngram_order > 1) {
    for (auto& p : encoded.pairs) {
      p.source = ngram_encode(p.source, options.ngram_order);
      p.target = ngram_encode(p.target, options.ngram_order);
    }
  }
  EmOptions em = options.em;
  em.jobs = options.jobs;
  CorpusAlignment out;
  out.forward = em_train(encoded, em);
  out.reverse = em_train(encoded.reversed(), em);
  out.alignments.resize(encoded.size());
  parallel_for(encoded.size(), options.jobs, [&](std::size_t i) {
    const auto& p = encoded.pairs[i];
    const AlignmentMatrix fwd = viterbi_align(out.forward, p.source, p.target);
    const AlignmentMatrix rev = viterbi_align(out.reverse, p.target, p.source).transposed();
    AlignmentMatrix sym = symmetrize_gdfa(fwd, rev);
    out.alignments[i] = options.ngram_order > 1 ? ngram_links_to_char_links(sym) : std::move(sym);
  });
  return out;
}

void write_alignments(std::ostream& out, std::span<const AlignmentMatrix> alignments) {
  for (const auto& a : alignments) {
    bool first = true;
    for (auto [s, t] : a.links()) {
      if (!first) out << ' ';
      out << s << '-' << t;
      first = false;
    }
    out << '\n';
  }
}

std::vector<AlignmentMatrix> read_alignments(std::istream& in, const Bitext& bitext) {
  std::vector<AlignmentMatrix> out;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (index >= bitext.size()) throw std::runtime_error("alignment file has more lines than the bitext");
    const auto& p = bitext.pairs[index];
    AlignmentMatrix a(p.source.size(), p.target.size());
    for (const auto& link : split_whitespace(line)) {
      const auto dash = link.find('-');
      if (dash == std::string::npos) throw std::runtime_error("malformed link '" + link + "' on line " + std::to_string(index + 1));
      a.add(std::stoi(link.substr(0, dash)), std::stoi(link.substr(dash + 1)));
    }
    out.push_back(std::move(a));
    ++index;
  }
  if (index != bitext.size()) throw std::runtime_error("alignment file has fewer lines than the bitext");
  return out;
}

}  // namespace charpivot
