#include "charpivot/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "charpivot/util.hpp"

namespace charpivot {

std::string Hypothesis::surface() const { return join(tokens); }

namespace {

constexpr std::string_view kOovOpen = "⟦";
constexpr std::string_view kOovClose = "⟧";

struct Weights {
  double lm, phi_fwd, phi_rev, lex_fwd, lex_rev, word_penalty, phrase_penalty, distortion, oov;

  explicit Weights(const FeatureWeights& w)
      : lm(w.get(feature::lm)),
        phi_fwd(w.get(feature::phi_fwd)),
        phi_rev(w.get(feature::phi_rev)),
        lex_fwd(w.get(feature::lex_fwd)),
        lex_rev(w.get(feature::lex_rev)),
        word_penalty(w.get(feature::word_penalty)),
        phrase_penalty(w.get(feature::phrase_penalty)),
        distortion(w.get(feature::distortion)),
        oov(w.get(feature::oov)) {}
};

struct Option {
  int begin = 0;
  int end = 0;
  Sentence target;
  std::vector<std::uint32_t> lm_ids;
  bool oov = false;
  double phi_fwd = 0, phi_rev = 0, lex_fwd = 0, lex_rev = 0;
  double static_score = 0.0;  // weighted, LM and distortion excluded
};

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

// Arcs of a node form a singly linked list through `next`.
struct Arc {
  std::uint32_t prev;
  std::uint32_t option;
  double delta;
  std::uint32_t next;
};

struct Derivation {
  double score;
  std::uint32_t arc;
  std::uint32_t rank;  // rank within the predecessor's derivations
};

struct Node {
  std::uint32_t coverage = 0;  // offset into the coverage pool
  LMState lm;
  int last_end = 0;
  int covered = 0;
  double best = -std::numeric_limits<double>::infinity();
  std::uint32_t first_arc = kNone;
  std::uint32_t bucket_next = kNone;
  // Lazy k-best state.
  bool started = false;
  std::vector<Derivation> kbest;
  std::vector<Derivation> heap;
};

struct CandidateLess {
  bool operator()(const Derivation& a, const Derivation& b) const {
    if (a.score != b.score) return a.score < b.score;
    if (a.arc != b.arc) return a.arc > b.arc;
    return a.rank > b.rank;
  }
};

class Search {
 public:
  Search(const Sentence& input, const PhraseTable& table, const NgramLM& lm, const FeatureWeights& weights,
         const DecoderOptions& options)
      : input_(input),
        table_(table),
        lm_(lm),
        w_(weights),
        options_(options),
        n_(static_cast<int>(input.size())),
        words_((static_cast<std::size_t>(n_) + 63) / 64) {}

  KBestList run();

 private:
  void build_options();
  const std::uint64_t* coverage(std::uint32_t node_id) const { return &pool_[nodes_[node_id].coverage]; }
  static bool is_covered(const std::uint64_t* cov, int i) { return (cov[i / 64] >> (i % 64)) & 1u; }
  int first_gap(const std::uint64_t* cov) const {
    for (int i = 0; i < n_; ++i) {
      if (!is_covered(cov, i)) return i;
    }
    return n_;
  }
  void expand(std::uint32_t node_id);
  void prune(int stack);
  const Derivation* kth(std::uint32_t node_id, std::size_t rank);
  std::vector<std::uint32_t> options_of(std::uint32_t node_id, std::size_t rank);
  Hypothesis materialize(const std::vector<std::uint32_t>& path) const;

  const Sentence& input_;
  const PhraseTable& table_;
  const NgramLM& lm_;
  Weights w_;
  const DecoderOptions& options_;
  int n_;
  std::size_t words_;

  std::vector<Option> options_list_;
  std::vector<std::vector<std::uint32_t>> by_begin_;
  std::vector<Node> nodes_;
  std::vector<Arc> arcs_;
  std::vector<std::uint64_t> pool_;
  std::vector<std::uint64_t> scratch_;
  std::vector<std::vector<std::uint32_t>> stacks_;
  // Per stack: hash of (coverage, LM state, last end) to the head of a chain
  // of nodes linked through bucket_next.
  std::vector<std::unordered_map<std::size_t, std::uint32_t>> recombination_;
  std::uint32_t goal_ = 0;
};

void Search::build_options() {
  by_begin_.assign(n_, {});
  const int max_len = std::max(1, table_.max_phrase_length());
  for (int b = 0; b < n_; ++b) {
    bool single = false;
    std::string key;
    for (int e = b + 1; e <= n_ && e - b <= max_len; ++e) {
      if (e > b + 1) key += ' ';
      key += input_[e - 1];
      const auto* group = table_.find(key);
      if (group == nullptr) continue;
      if (e == b + 1) single = true;
      struct Scored {
        const PhrasePair* pair;
        std::vector<std::uint32_t> ids;
        double static_score;
        double rank_score;
      };
      std::vector<Scored> scored;
      scored.reserve(group->size());
      for (const auto& p : *group) {
        Scored sc{&p, {}, 0.0, 0.0};
        for (const auto& t : p.target) sc.ids.push_back(lm_.word_id(t));
        sc.static_score = w_.phi_fwd * std::log(p.scores.phi_tgt_given_src) +
                          w_.phi_rev * std::log(p.scores.phi_src_given_tgt) +
                          w_.lex_fwd * std::log(p.scores.lex_tgt_given_src) +
                          w_.lex_rev * std::log(p.scores.lex_src_given_tgt) +
                          w_.word_penalty * static_cast<double>(p.target.size()) + w_.phrase_penalty;
        scored.push_back(std::move(sc));
      }
      if (scored.size() > options_.table_limit) {
        // Rank by the weighted translation scores plus a context-free LM estimate.
        for (auto& sc : scored) {
          LMState st{0};
          double lm_score = 0.0;
          for (auto id : sc.ids) lm_score += lm_.extend(st, id);
          sc.rank_score = sc.static_score + w_.lm * lm_score;
        }
        std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& c) {
          if (a.rank_score != c.rank_score) return a.rank_score > c.rank_score;
          return a.pair->target < c.pair->target;
        });
        scored.resize(options_.table_limit);
      }
      std::vector<Option> span;
      for (auto& sc : scored) {
        const auto& p = *sc.pair;
        Option o;
        o.begin = b;
        o.end = e;
        o.target = p.target;
        o.lm_ids = std::move(sc.ids);
        o.phi_fwd = std::log(p.scores.phi_tgt_given_src);
        o.phi_rev = std::log(p.scores.phi_src_given_tgt);
        o.lex_fwd = std::log(p.scores.lex_tgt_given_src);
        o.lex_rev = std::log(p.scores.lex_src_given_tgt);
        o.static_score = sc.static_score;
        span.push_back(std::move(o));
      }
      for (auto& o : span) {
        by_begin_[b].push_back(static_cast<std::uint32_t>(options_list_.size()));
        options_list_.push_back(std::move(o));
      }
    }
    if (!single) {
      Option o;
      o.begin = b;
      o.end = b + 1;
      o.target = {input_[b]};
      o.lm_ids = {lm_.word_id(input_[b])};
      o.oov = true;
      o.static_score = w_.word_penalty + w_.phrase_penalty + w_.oov;
      by_begin_[b].push_back(static_cast<std::uint32_t>(options_list_.size()));
      options_list_.push_back(std::move(o));
    }
  }
}

void Search::expand(std::uint32_t node_id) {
  const int limit = options_.distortion_limit;
  const int gap = first_gap(coverage(node_id));
  const int last_end = nodes_[node_id].last_end;
  for (int b = gap; b < n_; ++b) {
    const int jump = std::abs(b - last_end);
    if (limit >= 0 && jump > limit) {
      if (b > last_end) break;
      continue;
    }
    if (is_covered(coverage(node_id), b)) continue;
    for (std::uint32_t oi : by_begin_[b]) {
      const Option& o = options_list_[oi];
      const std::uint64_t* cov_in = coverage(node_id);
      bool free = true;
      for (int i = o.begin; i < o.end && free; ++i) free = !is_covered(cov_in, i);
      if (!free) continue;
      // Leaving a gap: it must stay reachable.
      if (limit >= 0 && o.begin > gap && o.end - gap > limit) continue;

      LMState st = nodes_[node_id].lm;
      double lm_score = 0.0;
      for (auto id : o.lm_ids) lm_score += lm_.extend(st, id);
      const double delta = o.static_score + w_.lm * lm_score + w_.distortion * static_cast<double>(jump);

      scratch_.assign(cov_in, cov_in + words_);
      for (int i = o.begin; i < o.end; ++i) scratch_[i / 64] |= std::uint64_t{1} << (i % 64);
      const int covered = nodes_[node_id].covered + (o.end - o.begin);

      std::size_t h = std::hash<std::uint32_t>{}(st.node);
      hash_combine(h, static_cast<std::size_t>(o.end));
      for (auto word : scratch_) hash_combine(h, std::hash<std::uint64_t>{}(word));
      auto [slot, fresh_bucket] = recombination_[covered].try_emplace(h, kNone);
      std::uint32_t target = kNone;
      for (std::uint32_t cand = slot->second; cand != kNone; cand = nodes_[cand].bucket_next) {
        const Node& c = nodes_[cand];
        if (c.lm == st && c.last_end == o.end && std::equal(scratch_.begin(), scratch_.end(), &pool_[c.coverage])) {
          target = cand;
          break;
        }
      }
      const double score = nodes_[node_id].best + delta;
      if (target == kNone) {
        target = static_cast<std::uint32_t>(nodes_.size());
        Node fresh;
        fresh.coverage = static_cast<std::uint32_t>(pool_.size());
        pool_.insert(pool_.end(), scratch_.begin(), scratch_.end());
        fresh.lm = st;
        fresh.last_end = o.end;
        fresh.covered = covered;
        fresh.bucket_next = slot->second;
        slot->second = target;
        nodes_.push_back(std::move(fresh));
        stacks_[covered].push_back(target);
      }
      Node& t = nodes_[target];
      arcs_.push_back({node_id, oi, delta, t.first_arc});
      t.first_arc = static_cast<std::uint32_t>(arcs_.size() - 1);
      t.best = std::max(t.best, score);
    }
  }
}

void Search::prune(int stack) {
  auto& s = stacks_[stack];
  if (s.size() <= options_.beam) return;
  std::stable_sort(s.begin(), s.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return nodes_[a].best > nodes_[b].best; });
  s.resize(options_.beam);
  std::sort(s.begin(), s.end());
}

const Derivation* Search::kth(std::uint32_t node_id, std::size_t rank) {
  if (!nodes_[node_id].started) {
    nodes_[node_id].started = true;
    if (node_id == 0) {
      nodes_[node_id].kbest.push_back({0.0, kNone, 0});
    } else {
      std::vector<Derivation> heap;
      for (std::uint32_t a = nodes_[node_id].first_arc; a != kNone; a = arcs_[a].next) {
        const Arc arc = arcs_[a];
        const Derivation* first = kth(arc.prev, 0);
        if (first != nullptr) heap.push_back({first->score + arc.delta, a, 0});
      }
      std::make_heap(heap.begin(), heap.end(), CandidateLess{});
      nodes_[node_id].heap = std::move(heap);
    }
  }
  while (nodes_[node_id].kbest.size() <= rank && !nodes_[node_id].heap.empty()) {
    auto& heap = nodes_[node_id].heap;
    std::pop_heap(heap.begin(), heap.end(), CandidateLess{});
    const Derivation best = heap.back();
    heap.pop_back();
    nodes_[node_id].kbest.push_back(best);
    const Arc arc = arcs_[best.arc];
    const Derivation* next = kth(arc.prev, best.rank + 1);
    if (next != nullptr) {
      auto& h = nodes_[node_id].heap;
      h.push_back({next->score + arc.delta, best.arc, best.rank + 1});
      std::push_heap(h.begin(), h.end(), CandidateLess{});
    }
  }
  const auto& kbest = nodes_[node_id].kbest;
  return rank < kbest.size() ? &kbest[rank] : nullptr;
}

std::vector<std::uint32_t> Search::options_of(std::uint32_t node_id, std::size_t rank) {
  std::vector<std::uint32_t> path;
  while (node_id != 0) {
    const Derivation d = nodes_[node_id].kbest[rank];
    const Arc arc = arcs_[d.arc];
    if (node_id != goal_) path.push_back(arc.option);
    node_id = arc.prev;
    rank = d.rank;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

Hypothesis Search::materialize(const std::vector<std::uint32_t>& path) const {
  Hypothesis h;
  double lm = 0, phi_fwd = 0, phi_rev = 0, lex_fwd = 0, lex_rev = 0, distortion = 0, oov = 0;
  LMState st = lm_.begin_state();
  int last_end = 0;
  for (auto oi : path) {
    const Option& o = options_list_[oi];
    for (std::size_t i = 0; i < o.target.size(); ++i) {
      h.tokens.push_back(o.target[i]);
      h.oov.push_back(o.oov);
      lm += lm_.extend(st, o.lm_ids[i]);
    }
    phi_fwd += o.phi_fwd;
    phi_rev += o.phi_rev;
    lex_fwd += o.lex_fwd;
    lex_rev += o.lex_rev;
    oov += o.oov ? 1.0 : 0.0;
    distortion += std::abs(o.begin - last_end);
    last_end = o.end;
    h.segments.emplace_back(o.begin, o.end);
  }
  lm += lm_.end_score(st);
  h.features = {{std::string(feature::lm), lm},
                {std::string(feature::phi_fwd), phi_fwd},
                {std::string(feature::phi_rev), phi_rev},
                {std::string(feature::lex_fwd), lex_fwd},
                {std::string(feature::lex_rev), lex_rev},
                {std::string(feature::word_penalty), static_cast<double>(h.tokens.size())},
                {std::string(feature::phrase_penalty), static_cast<double>(path.size())},
                {std::string(feature::distortion), distortion},
                {std::string(feature::oov), oov}};
  h.total = w_.lm * lm + w_.phi_fwd * phi_fwd + w_.phi_rev * phi_rev + w_.lex_fwd * lex_fwd +
            w_.lex_rev * lex_rev + w_.word_penalty * static_cast<double>(h.tokens.size()) +
            w_.phrase_penalty * static_cast<double>(path.size()) + w_.distortion * distortion + w_.oov * oov;
  return h;
}

KBestList Search::run() {
  build_options();
  pool_.assign(words_, 0);
  Node start;
  start.coverage = 0;
  start.lm = lm_.begin_state();
  start.best = 0.0;
  nodes_.push_back(std::move(start));
  stacks_.assign(n_ + 1, {});
  recombination_.assign(n_ + 1, {});
  stacks_[0].push_back(0);

  for (int s = 0; s < n_; ++s) {
    prune(s);
    recombination_[s].clear();
    for (std::size_t i = 0; i < stacks_[s].size(); ++i) expand(stacks_[s][i]);
  }
  prune(n_);

  Node goal;
  for (std::uint32_t id : stacks_[n_]) {
    const double delta = w_.lm * lm_.end_score(nodes_[id].lm);
    arcs_.push_back({id, kNone, delta, goal.first_arc});
    goal.first_arc = static_cast<std::uint32_t>(arcs_.size() - 1);
    goal.best = std::max(goal.best, nodes_[id].best + delta);
  }
  goal_ = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(std::move(goal));

  KBestList out;
  out.unique = options_.unique;
  const std::size_t cap =
      options_.unique ? (options_.max_derivations ? options_.max_derivations : std::max<std::size_t>(1000, 200 * options_.k))
                      : options_.k;
  std::unordered_set<std::string> seen;
  for (std::size_t rank = 0; rank < cap && out.hyps.size() < options_.k; ++rank) {
    if (kth(goal_, rank) == nullptr) break;
    Hypothesis h = materialize(options_of(goal_, rank));
    if (options_.unique && !seen.insert(h.surface()).second) continue;
    out.hyps.push_back(std::move(h));
  }
  std::stable_sort(out.hyps.begin(), out.hyps.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.total != b.total) return a.total > b.total;
    return a.tokens < b.tokens;
  });
  return out;
}

}  // namespace

KBestList decode(const Sentence& input, const PhraseTable& table, const NgramLM& lm, const FeatureWeights& weights,
                 const DecoderOptions& options) {
  if (options.k == 0) throw std::invalid_argument("k must be at least 1");
  if (options.beam == 0) throw std::invalid_argument("beam must be at least 1");
  for (const auto& name : decoder_feature_names()) {
    if (!weights.contains(name)) throw std::invalid_argument("no weight for decoder feature " + name);
  }
  Search search(input, table, lm, weights, options);
  return search.run();
}

std::vector<KBestList> decode_corpus(std::span<const Sentence> inputs, const PhraseTable& table, const NgramLM& lm,
                                     const FeatureWeights& weights, const DecoderOptions& options, int jobs) {
  std::vector<KBestList> out(inputs.size());
  parallel_for(inputs.size(), jobs, [&](std::size_t i) { out[i] = decode(inputs[i], table, lm, weights, options); });
  return out;
}

void write_kbest(std::ostream& out, std::span<const KBestList> lists, std::size_t first_id) {
  for (std::size_t i = 0; i < lists.size(); ++i) {
    for (const auto& h : lists[i].hyps) {
      out << first_id + i << " ||| " << h.surface() << " |||";
      for (const auto& [name, value] : h.features) out << ' ' << name << '=' << format_double(value);
      out << " ||| " << format_double(h.total) << '\n';
    }
  }
}

std::string mark_untranslated(const MarkedSentence& sentence) {
  std::string out;
  for (std::size_t t = 0; t < sentence.tokens.size(); ++t) {
    if (t > 0) out += ' ';
    if (t < sentence.oov.size() && sentence.oov[t]) {
      out += kOovOpen;
      out += sentence.tokens[t];
      out += kOovClose;
    } else {
      out += sentence.tokens[t];
    }
  }
  return out;
}

MarkedSentence parse_marked(std::string_view line) {
  MarkedSentence out;
  for (auto& m : split_whitespace(line)) {
    const bool marked = m.size() >= kOovOpen.size() + kOovClose.size() && m.compare(0, kOovOpen.size(), kOovOpen) == 0 &&
                        m.compare(m.size() - kOovClose.size(), kOovClose.size(), kOovClose) == 0;
    if (marked) m = m.substr(kOovOpen.size(), m.size() - kOovOpen.size() - kOovClose.size());
    out.tokens.push_back(std::move(m));
    out.oov.push_back(marked);
  }
  return out;
}

void write_kbest_markup(std::ostream& out, std::span<const KBestList> lists, std::size_t first_id) {
  for (std::size_t i = 0; i < lists.size(); ++i) {
    for (const auto& h : lists[i].hyps) out << first_id + i << " ||| " << mark_untranslated(h.marked()) << '\n';
  }
}

std::vector<KBestList> read_kbest(std::istream& in, std::istream* markup, std::size_t first_id) {
  std::vector<KBestList> lists;
  std::string line, mline;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fail = [&](const std::string& what) {
      throw std::runtime_error("k-best line " + std::to_string(line_no) + ": " + what);
    };
    const auto fields = split(line, " ||| ");
    if (fields.size() != 4) fail("expected 4 fields");
    std::size_t id = 0;
    Hypothesis h;
    try {
      id = std::stoull(fields[0]);
      h.total = std::stod(fields[3]);
    } catch (const std::logic_error&) {
      fail("malformed number");
    }
    if (id < first_id) fail("sentence id below the first id");
    if (id - first_id + 1 < lists.size()) fail("sentence ids must be non-decreasing");
    h.tokens = split_whitespace(fields[1]);
    h.oov.assign(h.tokens.size(), false);
    for (const auto& kv : split_whitespace(fields[2])) {
      const auto eq = kv.rfind('=');
      if (eq == std::string::npos || eq == 0) fail("malformed feature '" + kv + "'");
      try {
        h.features[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
      } catch (const std::logic_error&) {
        fail("malformed feature value '" + kv + "'");
      }
    }
    if (markup != nullptr) {
      if (!std::getline(*markup, mline)) fail("markup stream ended early");
      const auto mfields = split(mline, " ||| ");
      const auto marked = mfields.size() == 2 ? parse_marked(mfields[1]) : MarkedSentence{};
      if (mfields.size() != 2 || marked.tokens != h.tokens) fail("markup line does not match");
      h.oov = marked.oov;
    }
    if (lists.size() < id - first_id + 1) lists.resize(id - first_id + 1);
    lists[id - first_id].hyps.push_back(std::move(h));
  }
  return lists;
}

}  // namespace charpivot
