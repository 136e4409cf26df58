#include "commands.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "charpivot/util.hpp"

namespace charpivot::cli {

namespace {

std::filesystem::path out_file(const PipelineConfig& c, const std::string& name) {
  std::filesystem::create_directories(c.out_dir());
  return c.out_dir() / name;
}

Bitext training_bitext(const PipelineConfig& c) {
  return read_bitext(c.require("source"), c.require("target"), c.get("source_lang"), c.get("target_lang"));
}

Bitext char_bitext(const Bitext& b, const CharEncoding& enc) {
  Bitext out{b.source_lang, b.target_lang, {}};
  for (const auto& p : b.pairs) out.pairs.push_back({char_encode(p.source, enc), char_encode(p.target, enc)});
  return out;
}

/// The bitext at the configured level, without empty pairs.
Bitext level_bitext(const PipelineConfig& c) {
  const Bitext b = remove_empty_pairs(training_bitext(c));
  return c.level() == Level::character ? char_bitext(b, c.encoding()) : b;
}

void write_marked(const std::filesystem::path& path, const std::vector<MarkedSentence>& sentences) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& s : sentences) out << mark_untranslated(s) << '\n';
}

std::vector<MarkedSentence> read_marked(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<MarkedSentence> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(parse_marked(line));
  return out;
}

/// Writes "<name>.txt" and "<name>.markup" and registers both.
void write_outputs(const PipelineConfig& c, Manifest& m, const std::string& name,
                   const std::vector<MarkedSentence>& outputs) {
  std::vector<Sentence> plain;
  for (const auto& o : outputs) plain.push_back(o.tokens);
  const auto txt = out_file(c, name + ".txt");
  const auto markup = out_file(c, name + ".markup");
  write_sentences(txt, plain);
  write_marked(markup, outputs);
  m.add_artifact(txt);
  m.add_artifact(markup);
}

std::size_t count_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

void write_tuning(const PipelineConfig& c, Manifest& m, const TuneResult& result) {
  const auto weights = out_file(c, "weights.txt");
  result.weights.write(weights);
  m.add_artifact(weights);
  const auto trajectory = out_file(c, "trajectory.tsv");
  std::ofstream out(trajectory);
  write_trajectory(out, result.trajectory);
  out.close();
  m.add_artifact(trajectory);
  for (const auto& step : result.trajectory) {
    std::cout << "iteration " << step.iteration << "\tdev BLEU " << format_double(step.dev_bleu) << "\tcandidates "
              << step.candidates << '\n';
  }
}

Bitext dev_bitext(const PipelineConfig& c) {
  return read_bitext(c.require("dev_source"), c.require("dev_target"), c.get("source_lang"), c.get("target_lang"));
}

// --- subcommands

void run_clean(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  const Bitext in = training_bitext(c);
  const auto same = filter_same_language(in, c.real("same_language_threshold"));
  Bitext out{in.source_lang, in.target_lang, {}};
  if (same.keep) {
    out = remove_empty_pairs(in);
    const auto& cf = c.get("charset_filter");
    if (cf != "none") out = filter_charset(out, macedonian_bulgarian_filter(cf == "mk-source"));
  }
  const auto src = out_file(c, "clean.source");
  const auto tgt = out_file(c, "clean.target");
  write_bitext(out, src, tgt);
  m.add_artifact(src);
  m.add_artifact(tgt);
  std::cout << "pairs in " << in.size() << ", out " << out.size() << "; cross BLEU " << format_double(100.0 * same.bleu)
            << (same.keep ? "" : " (dropped as same language)") << '\n';
}

void run_encode(const PipelineConfig& c, const CommandFlags& flags, Manifest& m) {
  const auto input = read_sentences(std::filesystem::path(c.require("input")));
  const std::filesystem::path output = c.require("output");
  const int n = static_cast<int>(c.integer("encode_ngram"));
  const auto enc = c.encoding();
  std::vector<Sentence> out;
  for (const auto& s : input) {
    if (flags.inverse) {
      // n-gram tokens start with the character at their position.
      Sentence chars;
      for (const auto& t : s) chars.push_back(utf8_chars(t).front());
      out.push_back(char_decode(chars, enc));
    } else {
      out.push_back(ngram_encode(char_encode(s, enc), n));
    }
  }
  if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
  write_sentences(output, out);
  m.add_artifact(output);
}

void run_subset(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  const Bitext in = training_bitext(c);
  const auto k = static_cast<std::size_t>(c.integer("subset_size"));
  if (k == 0) throw ConfigError("subset_size must be positive");
  const Bitext out = subset(in, k, c.seed());
  const auto src = out_file(c, "subset.source");
  const auto tgt = out_file(c, "subset.target");
  write_bitext(out, src, tgt);
  m.add_artifact(src);
  m.add_artifact(tgt);
  std::cout << "kept " << out.size() << " of " << in.size() << " pairs\n";
}

AlignOptions align_options(const PipelineConfig& c, int ngram) {
  AlignOptions a;
  a.ngram_order = ngram;
  a.em = c.system_config().em;
  a.em.jobs = c.jobs();
  a.jobs = c.jobs();
  return a;
}

void run_align(const PipelineConfig& c, const CommandFlags& flags, Manifest& m) {
  const Bitext data = level_bitext(c);
  if (flags.ngram_sweep.empty()) {
    const auto aligned = align_corpus(data, align_options(c, static_cast<int>(c.integer("align_ngram"))));
    const auto path = out_file(c, "alignments.txt");
    std::ofstream out(path);
    write_alignments(out, aligned.alignments);
    out.close();
    m.add_artifact(path);
    std::cout << "alignment points " << alignment_point_count(aligned.alignments) << '\n';
    return;
  }
  if (c.level() != Level::character) throw ConfigError("--ngram sweeps need level=character");
  const auto report = out_file(c, "align-sweep.tsv");
  std::ofstream tsv(report);
  tsv << "ngram\talignment_points\tphrase_pairs\n";
  for (int n : flags.ngram_sweep) {
    if (n < 1 || n > 10) throw ConfigError("--ngram values must be between 1 and 10");
    const auto aligned = align_corpus(data, align_options(c, n));
    const auto path = out_file(c, "alignments.n" + std::to_string(n) + ".txt");
    std::ofstream out(path);
    write_alignments(out, aligned.alignments);
    out.close();
    m.add_artifact(path);
    PhraseTableOptions pt;
    pt.max_phrase_length = static_cast<int>(c.integer("max_phrase_length"));
    pt.jobs = c.jobs();
    const auto table = build_phrase_table(data, aligned.alignments, pt);
    tsv << n << '\t' << alignment_point_count(aligned.alignments) << '\t' << table.size() << '\n';
    std::cout << "n=" << n << "\talignment points " << alignment_point_count(aligned.alignments) << "\tphrase pairs "
              << table.size() << '\n';
  }
  tsv.close();
  m.add_artifact(report);
}

void run_lm_train(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  const auto source = c.has("lm_text") ? c.path("lm_text") : c.path("target");
  if (source.empty()) throw ConfigError("lm-train needs lm_text or target");
  auto text = read_sentences(source);
  if (c.level() == Level::character) {
    for (auto& s : text) s = char_encode(s, c.encoding());
  }
  LmOptions lo;
  lo.order = static_cast<int>(c.integer("lm_order"));
  const auto lm = NgramLM::train(text, lo);
  const auto path = out_file(c, "lm.arpa");
  lm.save_arpa(path);
  m.add_artifact(path);
}

void run_extract(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  const Bitext data = level_bitext(c);
  std::ifstream in(c.require("alignments"));
  const auto alignments = read_alignments(in, data);
  PhraseTableOptions pt;
  pt.max_phrase_length = static_cast<int>(c.integer("max_phrase_length"));
  pt.jobs = c.jobs();
  const auto table = build_phrase_table(data, alignments, pt);
  const auto path = out_file(c, "phrase-table.txt");
  table.write(path);
  m.add_artifact(path);
  std::cout << "phrase pairs " << table.size() << " from " << data.size() << " sentence pairs\n";
}

void run_prune(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  auto n = static_cast<std::uint64_t>(c.integer("corpus_size"));
  if (n == 0) {
    if (!c.has("source")) throw ConfigError("prune needs corpus_size or source");
    n = count_lines(c.path("source"));
  }
  const auto table = PhraseTable::read(std::filesystem::path(c.require("phrase_table")), n);
  const auto pruned = prune_significance(table, c.real("prune_epsilon"));
  const auto path = out_file(c, "phrase-table.pruned.txt");
  pruned.write(path);
  m.add_artifact(path);
  std::cout << "phrase pairs " << table.size() << " -> " << pruned.size() << '\n';
}

void run_train(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  const Bitext bitext = training_bitext(c);
  std::vector<Sentence> extra;
  if (c.has("lm_text")) extra = read_sentences(c.path("lm_text"));
  TrainingReport report;
  const auto system = train_system(bitext, c.system_config(), extra, &report);
  const auto dir = out_file(c, "system");
  save_system(system, dir);
  m.add_artifact(dir);
  std::cout << "pairs " << report.pairs << ", alignment points " << report.alignment_points << ", phrase pairs "
            << report.table_before_pruning << " -> " << report.table_size << '\n';
}

void run_decode(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  const auto system = load_system(c.require("system"));
  const auto inputs = read_sentences(std::filesystem::path(c.require("input")));
  const auto k = static_cast<std::size_t>(c.integer("k"));
  const auto lists = translate_corpus(system, inputs, k, c.flag("unique"), system.weights, c.jobs());
  std::vector<MarkedSentence> best;
  std::vector<KBestList> kbest;
  for (const auto& l : lists) {
    best.push_back(l.front().output);
    KBestList kl;
    kl.unique = c.flag("unique");
    for (const auto& t : l) {
      Hypothesis h;
      h.tokens = t.output.tokens;
      h.oov = t.output.oov;
      h.features = t.features;
      h.total = t.total;
      kl.hyps.push_back(std::move(h));
    }
    kbest.push_back(std::move(kl));
  }
  write_outputs(c, m, "output", best);
  if (k > 1) {
    const auto nbest = out_file(c, "nbest.txt");
    const auto markup = out_file(c, "nbest.markup");
    std::ofstream a(nbest), b(markup);
    write_kbest(a, kbest);
    write_kbest_markup(b, kbest);
    a.close();
    b.close();
    m.add_artifact(nbest);
    m.add_artifact(markup);
  }
}

void run_tune(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  auto system = load_system(c.require("system"));
  const auto dev = dev_bitext(c);
  const auto result = tune_system(system, dev, c.tune_options(), static_cast<std::size_t>(c.integer("tune_k")), c.jobs());
  const auto dir = out_file(c, "system");
  save_system(system, dir);
  m.add_artifact(dir);
  write_tuning(c, m, result);
}

void run_cascade(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  const auto first = load_system(c.require("first_system"));
  const auto second = load_system(c.require("second_system"));
  const TranslationPath path{"cascade", {&first, &second}};
  validate_path(path);
  const auto inputs = read_sentences(std::filesystem::path(c.require("input")));
  CascadeOptions co;
  co.k1 = static_cast<std::size_t>(c.integer("cascade_k1"));
  co.k2 = static_cast<std::size_t>(c.integer("cascade_k2"));
  co.unique_first = c.flag("cascade_unique");
  std::vector<MarkedSentence> outputs(inputs.size());
  std::vector<Sentence> pivots(inputs.size());
  std::vector<std::string> errors(inputs.size());
  parallel_for(inputs.size(), c.jobs(), [&](std::size_t i) {
    try {
      auto best = cascade_translate(inputs[i], path, co).front();
      outputs[i] = std::move(best.output);
      pivots[i] = std::move(best.pivot);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error("sentence " + std::to_string(i) + ": " + errors[i]);
  }
  write_outputs(c, m, "output", outputs);
  const auto pivot = out_file(c, "pivot.txt");
  write_sentences(pivot, pivots);
  m.add_artifact(pivot);
}

void run_global_tune(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  // paths = name=dir[+dir],...
  std::vector<std::pair<std::string, std::vector<std::string>>> specs;
  for (const auto& item : c.list("paths")) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("paths entries look like name=dir[+dir]: " + item);
    auto dirs = split(item.substr(eq + 1), "+");
    for (const auto& d : dirs) {
      if (!std::filesystem::exists(d)) throw ConfigError("paths: no such system directory: " + d);
    }
    specs.emplace_back(item.substr(0, eq), dirs);
  }
  if (specs.empty()) throw ConfigError("missing required key paths");
  std::map<std::string, SystemHandle> loaded;
  for (const auto& [name, dirs] : specs) {
    for (const auto& d : dirs) {
      if (!loaded.count(d)) loaded.emplace(d, load_system(d));
    }
  }
  std::vector<TranslationPath> paths;
  for (const auto& [name, dirs] : specs) {
    TranslationPath p{name, {}};
    for (const auto& d : dirs) p.systems.push_back(&loaded.at(d));
    validate_path(p);
    paths.push_back(std::move(p));
  }
  TuneOptions tune = c.tune_options();
  tune.method = parse_tune_method(c.get("global_tune_method"));
  EnsembleOptions eo;
  eo.cascade_k = static_cast<std::size_t>(c.integer("ensemble_cascade_k"));
  eo.direct_k = static_cast<std::size_t>(c.integer("ensemble_direct_k"));
  eo.jobs = c.jobs();
  const auto result = global_tune(paths, dev_bitext(c), tune, eo);
  write_tuning(c, m, result);
  if (c.has("test_source")) {
    const auto inputs = read_sentences(c.path("test_source"));
    const auto best = ensemble_translate_corpus(inputs, paths, result.weights, eo);
    std::vector<MarkedSentence> outputs;
    std::vector<Sentence> chosen;
    for (const auto& h : best) {
      outputs.push_back(h.output);
      chosen.push_back({h.path});
    }
    write_outputs(c, m, "output", outputs);
    const auto p = out_file(c, "output.paths");
    write_sentences(p, chosen);
    m.add_artifact(p);
  }
}

void run_synth(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  const auto system = load_system(c.require("system"));
  // The pivot side is in the generating system's source language.
  const Bitext pt = read_bitext(c.require("source"), c.require("target"), system.source_lang, c.get("target_lang"));
  const auto syn = synthesize_bitext(pt, system, c.jobs());
  const auto src = out_file(c, "synthetic.source");
  const auto tgt = out_file(c, "synthetic.target");
  write_synthetic(syn, src, tgt);
  m.add_artifact(src);
  m.add_artifact(tgt);
  m.add_artifact(src.string() + ".provenance");
  if (c.has("concat_source") || c.has("concat_target")) {
    const Bitext real =
        read_bitext(c.require("concat_source"), c.require("concat_target"), syn.bitext.source_lang, syn.bitext.target_lang);
    const auto all = concat_bitexts(std::vector<Bitext>{syn.bitext, real});
    const auto csrc = out_file(c, "combined.source");
    const auto ctgt = out_file(c, "combined.target");
    write_bitext(all, csrc, ctgt);
    m.add_artifact(csrc);
    m.add_artifact(ctgt);
  }
  std::cout << "synthesized " << syn.bitext.size() << " pairs with " << syn.provenance << '\n';
}

void run_eval(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  const auto hyps = read_sentences(std::filesystem::path(c.require("hypothesis")));
  const auto refs = read_sentences(std::filesystem::path(c.require("reference")));
  if (hyps.size() != refs.size()) {
    throw std::runtime_error("hypothesis has " + std::to_string(hyps.size()) + " lines, reference " +
                             std::to_string(refs.size()));
  }
  const auto word = corpus_bleu(hyps, refs);
  const auto chars = char_bleu(hyps, refs, c.encoding());
  write_report_text(std::cout, word, "BLEU");
  write_report_text(std::cout, chars, "chrBLEU");
  const auto path = out_file(c, "eval.txt");
  std::ofstream out(path);
  write_report_records(out, word, "");
  write_report_records(out, chars, "char_");
  if (c.has("hypothesis_markup")) {
    const auto oov = count_untranslated(read_marked(c.path("hypothesis_markup")));
    out << "untranslated=" << oov.untranslated << "\ntotal_words=" << oov.total_words << '\n';
    std::cout << "untranslated " << oov.untranslated << " of " << oov.total_words << " words\n";
  }
  out.close();
  m.add_artifact(path);
}

void run_curve(const PipelineConfig& c, const CommandFlags&, Manifest& m) {
  const Bitext bitext = remove_empty_pairs(training_bitext(c));
  const Bitext test =
      read_bitext(c.require("test_source"), c.require("test_target"), c.get("source_lang"), c.get("target_lang"));
  std::vector<std::size_t> sizes;
  for (const auto& s : c.list("curve_sizes")) {
    std::size_t n = 0;
    try {
      n = std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError("curve_sizes must be integers, got '" + s + "'");
    }
    if (n > 0 && n <= bitext.size()) sizes.push_back(n);
  }
  std::vector<Level> levels;
  for (const auto& l : c.list("curve_levels")) {
    try {
      levels.push_back(parse_level(l));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  const auto path = out_file(c, "curve.tsv");
  std::ofstream tsv(path);
  tsv << "level\tsize\tbleu\tuntranslated\ttotal_words\n";
  const auto sources = test.source_side();
  const auto refs = test.target_side();
  for (std::size_t n : sizes) {
    const Bitext train = subset(bitext, n, c.seed());
    for (Level level : levels) {
      const auto system = train_system(train, c.system_config_for(level));
      const auto out = translate_best(system, sources, c.jobs());
      std::vector<Sentence> hyps;
      for (const auto& o : out) hyps.push_back(o.tokens);
      const auto bleu = corpus_bleu(hyps, refs);
      const auto oov = count_untranslated(out);
      tsv << to_string(level) << '\t' << n << '\t' << format_double(bleu.bleu) << '\t' << oov.untranslated << '\t'
          << oov.total_words << '\n';
      std::cout << to_string(level) << "\tsize " << n << "\tBLEU " << format_double(bleu.bleu) << "\tuntranslated "
                << oov.untranslated << '\n';
    }
  }
  tsv.close();
  m.add_artifact(path);
}

}  // namespace

const std::vector<Command>& commands() {
  static const std::vector<Command> list{
      {"clean", "filter a bitext: same-language documents, empty pairs, charsets", run_clean},
      {"encode", "character (n-gram) encoding of a text file; --inverse decodes", run_encode},
      {"subset", "deterministic random subset of a bitext", run_subset},
      {"align", "word-align a bitext; --ngram N,... sweeps character n-gram orders", run_align},
      {"lm-train", "train a Kneser-Ney language model", run_lm_train},
      {"extract", "extract and score a phrase table from an aligned bitext", run_extract},
      {"prune", "significance pruning of a phrase table", run_prune},
      {"train", "train a complete system", run_train},
      {"decode", "translate with a trained system", run_decode},
      {"tune", "tune a system's weights on a dev set", run_tune},
      {"cascade", "translate through a pivot with k-best reranking", run_cascade},
      {"global-tune", "tune an ensemble of direct and cascaded paths", run_global_tune},
      {"synth", "translate the pivot side of a bitext into the source language", run_synth},
      {"eval", "BLEU and untranslated-word counts", run_eval},
      {"curve", "learning curve over training sizes and levels", run_curve},
  };
  return list;
}

}  // namespace charpivot::cli
