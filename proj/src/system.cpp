#include "charpivot/system.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include "charpivot/util.hpp"

namespace charpivot {

SystemConfig SystemConfig::word_defaults() { return {}; }

SystemConfig SystemConfig::char_defaults() {
  SystemConfig c;
  c.level = Level::character;
  c.align_ngram = 2;
  c.lm_order = 10;
  c.max_phrase_length = 10;
  c.decoder.distortion_limit = 0;
  return c;
}

SystemConfig SystemConfig::defaults_for(Level level) {
  return level == Level::character ? char_defaults() : word_defaults();
}

namespace {

Bitext encode_bitext(const Bitext& bitext, const CharEncoding& enc) {
  Bitext out{bitext.source_lang, bitext.target_lang, {}};
  out.pairs.reserve(bitext.size());
  for (const auto& p : bitext.pairs) out.pairs.push_back({char_encode(p.source, enc), char_encode(p.target, enc)});
  return out;
}

}  // namespace

SystemHandle train_system(const Bitext& bitext, const SystemConfig& config, std::span<const Sentence> extra_lm_text,
                          TrainingReport* report) {
  const bool chars = config.level == Level::character;
  const Bitext clean = remove_empty_pairs(bitext);
  if (clean.empty()) throw std::invalid_argument("training bitext has no non-empty pairs");
  const Bitext data = chars ? encode_bitext(clean, config.encoding) : clean;

  AlignOptions align;
  align.ngram_order = chars ? config.align_ngram : 1;
  align.em = config.em;
  align.em.jobs = config.jobs;
  align.jobs = config.jobs;
  const auto aligned = align_corpus(data, align);

  PhraseTableOptions pt;
  pt.max_phrase_length = config.max_phrase_length;
  pt.jobs = config.jobs;
  PhraseTable table = build_phrase_table(data, aligned.alignments, pt);
  const std::size_t before = table.size();
  if (config.prune_epsilon) table = prune_significance(table, *config.prune_epsilon);

  std::vector<Sentence> lm_text = data.target_side();
  for (const auto& s : extra_lm_text) lm_text.push_back(chars ? char_encode(s, config.encoding) : s);
  LmOptions lo;
  lo.order = config.lm_order;

  SystemHandle system;
  system.source_lang = bitext.source_lang;
  system.target_lang = bitext.target_lang;
  system.level = config.level;
  system.encoding = config.encoding;
  system.table = std::move(table);
  system.lm = NgramLM::train(lm_text, lo);
  system.decoder = config.decoder;
  if (report != nullptr) {
    report->pairs = data.size();
    report->alignment_points = alignment_point_count(aligned.alignments);
    report->table_before_pruning = before;
    report->table_size = system.table.size();
  }
  return system;
}

std::vector<Translation> translate(const SystemHandle& system, const Sentence& words, std::size_t k, bool unique,
                                   const FeatureWeights& weights) {
  const bool chars = system.level == Level::character;
  DecoderOptions opt = system.decoder;
  opt.k = k;
  opt.unique = unique;
  const auto input = chars ? char_encode(words, system.encoding) : words;
  const auto list = decode(input, system.table, system.lm, weights, opt);
  std::vector<Translation> out;
  out.reserve(list.hyps.size());
  for (const auto& h : list.hyps) {
    out.push_back({chars ? char_decode_marked(h.marked(), system.encoding) : h.marked(), h.features, h.total});
  }
  return out;
}

std::vector<Translation> translate(const SystemHandle& system, const Sentence& words, std::size_t k, bool unique) {
  return translate(system, words, k, unique, system.weights);
}

std::vector<std::vector<Translation>> translate_corpus(const SystemHandle& system, std::span<const Sentence> inputs,
                                                       std::size_t k, bool unique, const FeatureWeights& weights,
                                                       int jobs) {
  std::vector<std::vector<Translation>> out(inputs.size());
  std::vector<std::string> errors(inputs.size());
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    try {
      out[i] = translate(system, inputs[i], k, unique, weights);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error("sentence " + std::to_string(i) + ": " + errors[i]);
  }
  return out;
}

std::vector<MarkedSentence> translate_best(const SystemHandle& system, std::span<const Sentence> inputs, int jobs) {
  const auto lists = translate_corpus(system, inputs, 1, false, system.weights, jobs);
  std::vector<MarkedSentence> out;
  out.reserve(lists.size());
  for (const auto& l : lists) out.push_back(l.front().output);
  return out;
}

CandidateGenerator system_generator(const SystemHandle& system, std::vector<Sentence> sources, std::size_t k, int jobs) {
  return [&system, sources = std::move(sources), k, jobs](const FeatureWeights& w) {
    const auto lists = translate_corpus(system, sources, k, false, w, jobs);
    std::vector<std::vector<TuningCandidate>> out(lists.size());
    for (std::size_t i = 0; i < lists.size(); ++i) {
      for (const auto& t : lists[i]) out[i].push_back({t.output.tokens, t.features, {}});
    }
    return out;
  };
}

TuneResult tune_system(SystemHandle& system, const Bitext& dev, const TuneOptions& options, std::size_t k, int jobs) {
  if (dev.empty()) throw std::invalid_argument("dev set is empty");
  const auto refs = dev.target_side();
  auto result = tune_loop(refs, system_generator(system, dev.source_side(), k, jobs), system.weights, options);
  system.weights = result.weights;
  return result;
}

void save_system(const SystemHandle& system, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "system.txt");
  if (!out) throw std::runtime_error("cannot write " + (dir / "system.txt").string());
  out << "source_lang=" << system.source_lang << '\n'
      << "target_lang=" << system.target_lang << '\n'
      << "level=" << to_string(system.level) << '\n'
      << "space_marker=" << system.encoding.space_marker << '\n'
      << "corpus_size=" << system.table.corpus_size() << '\n'
      << "beam=" << system.decoder.beam << '\n'
      << "distortion_limit=" << system.decoder.distortion_limit << '\n'
      << "table_limit=" << system.decoder.table_limit << '\n';
  system.table.write(dir / "phrase-table.txt");
  system.lm.save_arpa(dir / "lm.arpa");
  system.weights.write(dir / "weights.txt");
}

SystemHandle load_system(const std::filesystem::path& dir) {
  std::ifstream in(dir / "system.txt");
  if (!in) throw std::runtime_error("cannot read " + (dir / "system.txt").string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed line in system.txt: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("system.txt lacks " + key);
    return it->second;
  };
  SystemHandle s;
  s.source_lang = get("source_lang");
  s.target_lang = get("target_lang");
  s.level = parse_level(get("level"));
  s.encoding.space_marker = get("space_marker");
  s.decoder.beam = std::stoull(get("beam"));
  s.decoder.distortion_limit = std::stoi(get("distortion_limit"));
  s.decoder.table_limit = std::stoull(get("table_limit"));
  s.table = PhraseTable::read(dir / "phrase-table.txt", std::stoull(get("corpus_size")));
  s.lm = NgramLM::load_arpa(dir / "lm.arpa");
  s.weights = FeatureWeights::read(dir / "weights.txt");
  return s;
}

}  // namespace charpivot
