#include "charpivot/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

#include "charpivot/util.hpp"

namespace charpivot {

namespace {

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
constexpr int kMaxOrder = 10;

}  // namespace

std::uint32_t NgramLM::child(std::uint32_t node, std::uint32_t word) const {
  auto it = children_.find(key(node, word));
  return it == children_.end() ? kNone : it->second;
}

std::uint32_t NgramLM::add_child(std::uint32_t node, std::uint32_t word) {
  auto [it, inserted] = children_.emplace(key(node, word), static_cast<std::uint32_t>(nodes_.size()));
  if (inserted) {
    Node n;
    n.word = word;
    n.parent = node;
    n.length = static_cast<std::uint16_t>(nodes_[node].length + 1);
    nodes_.push_back(n);
    nodes_[node].has_children = true;
  }
  return it->second;
}

void NgramLM::link_suffixes() {
  std::vector<std::uint32_t> by_length(nodes_.size());
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) by_length[i] = i;
  std::stable_sort(by_length.begin(), by_length.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return nodes_[a].length < nodes_[b].length; });
  for (std::uint32_t id : by_length) {
    Node& n = nodes_[id];
    if (n.length <= 1) {
      n.suffix = 0;
      continue;
    }
    // Longest existing proper suffix.
    std::uint32_t ctx = nodes_[n.parent].suffix;
    std::uint32_t s = child(ctx, n.word);
    while (s == kNone && ctx != 0) {
      ctx = nodes_[ctx].suffix;
      s = child(ctx, n.word);
    }
    n.suffix = s == kNone ? 0 : s;
  }
}

LMState NgramLM::minimize(std::uint32_t node) const {
  // A childless context with unit backoff predicts exactly like its suffix.
  while (node != 0 && !nodes_[node].has_children && nodes_[node].backoff == 0.0) node = nodes_[node].suffix;
  return LMState{node};
}

NgramLM NgramLM::train(std::span<const Sentence> corpus, const LmOptions& options) {
  if (corpus.empty()) throw std::invalid_argument("language model training on an empty corpus");
  if (options.order < 1 || options.order > kMaxOrder) {
    throw std::invalid_argument("language model order must be in [1, 10], got " + std::to_string(options.order));
  }
  NgramLM lm;
  lm.order_ = options.order;
  lm.boundaries_ = options.sentence_boundaries;
  lm.nodes_.emplace_back();  // root: the empty n-gram
  if (lm.boundaries_) {
    lm.start_id_ = lm.vocab_.intern(kSentenceStart);
    lm.end_id_ = lm.vocab_.intern(kSentenceEnd);
  }
  if (options.unknown_token) {
    lm.unk_id_ = lm.vocab_.intern(kUnknown);
    lm.has_unk_ = true;
  }

  std::vector<std::int64_t> raw(1, 0);
  std::vector<std::uint32_t> seq;
  for (const auto& sentence : corpus) {
    seq.clear();
    if (lm.boundaries_) seq.push_back(lm.start_id_);
    for (const auto& t : sentence) seq.push_back(lm.vocab_.intern(t));
    if (lm.boundaries_) seq.push_back(lm.end_id_);
    for (std::size_t p = 0; p < seq.size(); ++p) {
      std::uint32_t node = 0;
      for (std::size_t n = 0; n < static_cast<std::size_t>(lm.order_) && p + n < seq.size(); ++n) {
        node = lm.add_child(node, seq[p + n]);
        if (raw.size() < lm.nodes_.size()) raw.resize(lm.nodes_.size(), 0);
        ++raw[node];
      }
    }
  }
  if (lm.has_unk_) {
    lm.add_child(0, lm.unk_id_);
    raw.resize(lm.nodes_.size(), 0);
  }
  lm.link_suffixes();

  // Adjusted counts: raw at the highest order and for n-grams starting with
  // <s>, otherwise the number of distinct left extensions.
  const std::size_t n_nodes = lm.nodes_.size();
  std::vector<std::int64_t> continuation(n_nodes, 0);
  for (std::uint32_t id = 1; id < n_nodes; ++id) {
    if (lm.nodes_[id].length >= 2) ++continuation[lm.nodes_[id].suffix];
  }
  auto first_word = [&](std::uint32_t id) {
    while (lm.nodes_[id].length > 1) id = lm.nodes_[id].parent;
    return lm.nodes_[id].word;
  };
  std::vector<std::int64_t> adjusted(n_nodes, 0);
  for (std::uint32_t id = 1; id < n_nodes; ++id) {
    const Node& n = lm.nodes_[id];
    const bool starts_with_bos = lm.boundaries_ && first_word(id) == lm.start_id_;
    adjusted[id] = (n.length == lm.order_ || starts_with_bos) ? raw[id] : continuation[id];
  }

  auto is_bos_unigram = [&](std::uint32_t id) {
    return lm.boundaries_ && lm.nodes_[id].length == 1 && lm.nodes_[id].word == lm.start_id_;
  };

  // One absolute discount per order from the count-of-counts.
  std::vector<double> discount(lm.order_ + 1, 0.5);
  {
    std::vector<std::int64_t> n1(lm.order_ + 1, 0), n2(lm.order_ + 1, 0);
    for (std::uint32_t id = 1; id < n_nodes; ++id) {
      if (is_bos_unigram(id)) continue;
      const int len = lm.nodes_[id].length;
      if (adjusted[id] == 1) ++n1[len];
      if (adjusted[id] == 2) ++n2[len];
    }
    for (int k = 1; k <= lm.order_; ++k) {
      const double d = static_cast<double>(n1[k]) / static_cast<double>(n1[k] + 2 * n2[k]);
      // Degenerate count-of-counts (no singletons) would leave no mass for
      // lower orders; fall back to a mid-range discount.
      if (d > 0.0 && d <= 1.0) discount[k] = d;
    }
  }

  std::vector<std::vector<std::uint32_t>> by_length(lm.order_ + 1);
  for (std::uint32_t id = 1; id < n_nodes; ++id) by_length[lm.nodes_[id].length].push_back(id);

  // Unigrams: interpolate with the uniform distribution over predictable words.
  {
    double total = 0.0;
    std::int64_t types = 0, vocab = 0;
    for (std::uint32_t id : by_length[1]) {
      if (is_bos_unigram(id)) continue;
      ++vocab;
      total += static_cast<double>(adjusted[id]);
      if (adjusted[id] > 0) ++types;
    }
    const double d = discount[1];
    const double gamma = total > 0.0 ? d * static_cast<double>(types) / total : 1.0;
    for (std::uint32_t id : by_length[1]) {
      if (is_bos_unigram(id)) {
        lm.nodes_[id].log_prob = kImpossible;
        continue;
      }
      const double seen = total > 0.0 ? std::max(static_cast<double>(adjusted[id]) - d, 0.0) / total : 0.0;
      lm.nodes_[id].log_prob = std::log10(seen + gamma / static_cast<double>(vocab));
    }
  }

  auto lower_log_prob = [&](std::uint32_t ctx, std::uint32_t word) {
    double acc = 0.0;
    while (true) {
      const std::uint32_t c = lm.child(ctx, word);
      if (c != kNone) return acc + lm.nodes_[c].log_prob;
      if (ctx == 0) return acc + kImpossible;
      acc += lm.nodes_[ctx].backoff;
      ctx = lm.nodes_[ctx].suffix;
    }
  };

  std::vector<double> context_total(n_nodes, 0.0);
  std::vector<std::int64_t> context_types(n_nodes, 0);
  for (int k = 2; k <= lm.order_; ++k) {
    const double d = discount[k];
    for (std::uint32_t id : by_length[k]) {
      const std::uint32_t h = lm.nodes_[id].parent;
      context_total[h] += static_cast<double>(adjusted[id]);
      if (adjusted[id] > 0) ++context_types[h];
    }
    for (std::uint32_t h : by_length[k - 1]) {
      if (!lm.nodes_[h].has_children) continue;
      const double gamma = context_total[h] > 0.0 ? d * static_cast<double>(context_types[h]) / context_total[h] : 1.0;
      lm.nodes_[h].backoff = std::log10(gamma);
    }
    for (std::uint32_t id : by_length[k]) {
      const std::uint32_t h = lm.nodes_[id].parent;
      const double total = context_total[h];
      const double seen = total > 0.0 ? std::max(static_cast<double>(adjusted[id]) - d, 0.0) / total : 0.0;
      const double gamma = std::pow(10.0, lm.nodes_[h].backoff);
      const double lower = std::pow(10.0, lower_log_prob(lm.nodes_[h].suffix, lm.nodes_[id].word));
      lm.nodes_[id].log_prob = std::log10(seen + gamma * lower);
    }
  }
  return lm;
}

std::uint32_t NgramLM::word_id(std::string_view token) const {
  if (auto id = vocab_.find(token)) return *id;
  return has_unk_ ? unk_id_ : kNone;
}

LMState NgramLM::begin_state() const {
  if (!boundaries_) return LMState{0};
  return minimize(child(0, start_id_));
}

double NgramLM::extend(LMState& state, std::uint32_t word) const {
  double acc = 0.0;
  std::uint32_t ctx = state.node;
  while (true) {
    const std::uint32_t c = word == kNone ? kNone : child(ctx, word);
    if (c != kNone) {
      state = minimize(c);
      return acc + nodes_[c].log_prob;
    }
    if (ctx == 0) {
      state = LMState{0};
      return acc + kImpossible;
    }
    acc += nodes_[ctx].backoff;
    ctx = nodes_[ctx].suffix;
  }
}

std::pair<LMState, double> NgramLM::extend_state(LMState state, std::string_view token) const {
  const double lp = extend(state, word_id(token));
  return {state, lp};
}

double NgramLM::end_score(LMState state) const {
  if (!boundaries_) return 0.0;
  return extend(state, end_id_);
}

double NgramLM::score(const Sentence& sentence) const {
  LMState state = begin_state();
  double total = 0.0;
  for (const auto& t : sentence) total += extend(state, word_id(t));
  return total + end_score(state);
}

double NgramLM::log_prob(const Sentence& context, std::string_view word) const {
  LMState state{0};
  for (const auto& t : context) extend(state, word_id(t));
  return extend(state, word_id(word));
}

double NgramLM::perplexity(std::span<const Sentence> corpus) const {
  double total = 0.0;
  std::size_t events = 0;
  for (const auto& s : corpus) {
    total += score(s);
    events += s.size() + (boundaries_ ? 1 : 0);
  }
  if (events == 0) return 1.0;
  return std::pow(10.0, -total / static_cast<double>(events));
}

std::vector<std::string> NgramLM::predictable_vocabulary() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_) {
    if (n.length == 1 && !(boundaries_ && n.word == start_id_)) out.push_back(vocab_.token(n.word));
  }
  return out;
}

Sentence NgramLM::state_context(LMState state) const {
  Sentence out;
  for (std::uint32_t id = state.node; id != 0; id = nodes_[id].parent) out.push_back(vocab_.token(nodes_[id].word));
  std::reverse(out.begin(), out.end());
  return out;
}

std::size_t NgramLM::ngram_count(int n) const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [n](const Node& node) { return node.length == n; }));
}

void NgramLM::save_arpa(std::ostream& out) const {
  std::vector<std::vector<std::pair<std::string, std::uint32_t>>> grams(order_ + 1);
  for (std::uint32_t id = 1; id < nodes_.size(); ++id) {
    grams[nodes_[id].length].emplace_back(join(state_context(LMState{id})), id);
  }
  out << "\\data\\\n";
  for (int k = 1; k <= order_; ++k) out << "ngram " << k << "=" << grams[k].size() << "\n";
  for (int k = 1; k <= order_; ++k) {
    std::sort(grams[k].begin(), grams[k].end());
    out << "\n\\" << k << "-grams:\n";
    for (const auto& [text, id] : grams[k]) {
      out << format_double(nodes_[id].log_prob) << '\t' << text;
      if (k < order_) out << '\t' << format_double(nodes_[id].backoff);
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

void NgramLM::save_arpa(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_arpa(out);
}

NgramLM NgramLM::load_arpa(std::istream& in) {
  NgramLM lm;
  lm.nodes_.emplace_back();
  std::string line;
  int section = 0;
  int max_order = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t == "\\data\\") continue;
    if (t == "\\end\\") break;
    if (t.rfind("ngram ", 0) == 0) {
      const auto eq = t.find('=');
      max_order = std::max(max_order, std::stoi(t.substr(6, eq - 6)));
      continue;
    }
    if (t.front() == '\\') {
      section = std::stoi(t.substr(1));
      continue;
    }
    if (section == 0) throw std::runtime_error("ARPA line " + std::to_string(line_no) + " outside an n-gram section");
    auto fields = split_whitespace(t);
    if (static_cast<int>(fields.size()) < section + 1) {
      throw std::runtime_error("ARPA line " + std::to_string(line_no) + " has too few fields");
    }
    std::uint32_t node = 0;
    for (int k = 0; k < section; ++k) {
      const std::uint32_t w = lm.vocab_.intern(fields[1 + k]);
      if (k + 1 < section) {
        const std::uint32_t c = lm.child(node, w);
        if (c == kNone) {
          throw std::runtime_error("ARPA line " + std::to_string(line_no) + ": n-gram prefix missing");
        }
        node = c;
      } else {
        node = lm.add_child(node, w);
      }
    }
    lm.nodes_[node].log_prob = std::stod(fields[0]);
    if (static_cast<int>(fields.size()) > section + 1) lm.nodes_[node].backoff = std::stod(fields[section + 1]);
  }
  lm.order_ = std::max(1, max_order);
  if (auto id = lm.vocab_.find(kSentenceStart)) {
    lm.boundaries_ = true;
    lm.start_id_ = *id;
    lm.end_id_ = lm.vocab_.intern(kSentenceEnd);
  } else {
    lm.boundaries_ = false;
  }
  if (auto id = lm.vocab_.find(kUnknown)) {
    lm.has_unk_ = true;
    lm.unk_id_ = *id;
  }
  lm.link_suffixes();
  return lm;
}

NgramLM NgramLM::load_arpa(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_arpa(in);
}

}  // namespace charpivot
