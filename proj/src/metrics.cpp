#include "charpivot/metrics.hpp"

#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include "charpivot/util.hpp"

namespace charpivot {

namespace {

using NgramCounts = std::map<std::vector<std::string_view>, std::int64_t>;

NgramCounts count_ngrams(const Sentence& s, int n) {
  NgramCounts counts;
  if (static_cast<int>(s.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    std::vector<std::string_view> key(s.begin() + i, s.begin() + i + n);
    ++counts[key];
  }
  return counts;
}

void check_sizes(std::size_t hyps, std::size_t refs) {
  if (hyps != refs) {
    throw std::invalid_argument("BLEU: " + std::to_string(hyps) + " hypotheses but " +
                                std::to_string(refs) + " references");
  }
}

}  // namespace

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (int n = 0; n < kMaxBleuOrder; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_length += other.hyp_length;
  ref_length += other.ref_length;
  return *this;
}

BleuStats& BleuStats::operator-=(const BleuStats& other) {
  for (int n = 0; n < kMaxBleuOrder; ++n) {
    matches[n] -= other.matches[n];
    totals[n] -= other.totals[n];
  }
  hyp_length -= other.hyp_length;
  ref_length -= other.ref_length;
  return *this;
}

BleuStats sentence_bleu_stats(const Sentence& hyp, const Sentence& ref, int max_n) {
  if (max_n < 1 || max_n > kMaxBleuOrder) throw std::invalid_argument("BLEU order must be in [1, 4]");
  BleuStats stats;
  stats.max_n = max_n;
  stats.hyp_length = static_cast<std::int64_t>(hyp.size());
  stats.ref_length = static_cast<std::int64_t>(ref.size());
  for (int n = 1; n <= max_n; ++n) {
    const NgramCounts h = count_ngrams(hyp, n);
    const NgramCounts r = count_ngrams(ref, n);
    std::int64_t total = 0, clipped = 0;
    for (const auto& [gram, c] : h) {
      total += c;
      auto it = r.find(gram);
      if (it != r.end()) clipped += std::min(c, it->second);
    }
    stats.matches[n - 1] = clipped;
    stats.totals[n - 1] = total;
  }
  return stats;
}

BleuReport report_from_stats(const BleuStats& stats) {
  BleuReport report;
  report.hyp_length = stats.hyp_length;
  report.ref_length = stats.ref_length;
  report.length_ratio = stats.ref_length > 0
                            ? static_cast<double>(stats.hyp_length) / static_cast<double>(stats.ref_length)
                            : 0.0;
  double log_sum = 0.0;
  bool zero = stats.hyp_length == 0;
  for (int n = 0; n < stats.max_n; ++n) {
    const double p = stats.totals[n] > 0
                         ? static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n])
                         : 0.0;
    report.precisions.push_back(p);
    if (p <= 0.0) {
      zero = true;
    } else {
      log_sum += std::log(p);
    }
  }
  if (stats.hyp_length > 0 && stats.hyp_length < stats.ref_length) {
    report.brevity_penalty =
        std::exp(1.0 - static_cast<double>(stats.ref_length) / static_cast<double>(stats.hyp_length));
  } else if (stats.hyp_length == 0 && stats.ref_length > 0) {
    report.brevity_penalty = 0.0;
  }
  report.bleu = zero ? 0.0 : 100.0 * report.brevity_penalty * std::exp(log_sum / stats.max_n);
  return report;
}

double bleu_from_stats(const BleuStats& stats) {
  if (stats.hyp_length == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < stats.max_n; ++n) {
    if (stats.matches[n] <= 0 || stats.totals[n] <= 0) return 0.0;
    log_sum += std::log(static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]));
  }
  double bp = 1.0;
  if (stats.hyp_length < stats.ref_length) {
    bp = std::exp(1.0 - static_cast<double>(stats.ref_length) / static_cast<double>(stats.hyp_length));
  }
  return bp * std::exp(log_sum / stats.max_n);
}

double smoothed_sentence_bleu(const BleuStats& stats) {
  if (stats.hyp_length == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < stats.max_n; ++n) {
    double p;
    if (n == 0) {
      if (stats.matches[0] == 0) return 0.0;
      p = static_cast<double>(stats.matches[0]) / static_cast<double>(stats.totals[0]);
    } else {
      p = (static_cast<double>(stats.matches[n]) + 1.0) / (static_cast<double>(stats.totals[n]) + 1.0);
    }
    log_sum += std::log(p);
  }
  double bp = 1.0;
  if (stats.hyp_length < stats.ref_length) {
    bp = std::exp(1.0 - static_cast<double>(stats.ref_length) / static_cast<double>(stats.hyp_length));
  }
  return bp * std::exp(log_sum / stats.max_n);
}

BleuReport corpus_bleu(std::span<const Sentence> hyps, std::span<const Sentence> refs, int max_n) {
  check_sizes(hyps.size(), refs.size());
  BleuStats total;
  total.max_n = max_n;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += sentence_bleu_stats(hyps[i], refs[i], max_n);
  return report_from_stats(total);
}

BleuReport char_bleu(std::span<const Sentence> hyps, std::span<const Sentence> refs,
                     const CharEncoding& enc) {
  check_sizes(hyps.size(), refs.size());
  std::vector<Sentence> h, r;
  h.reserve(hyps.size());
  r.reserve(refs.size());
  // Sentence edges count as word boundaries so that edge characters take part
  // in as many n-grams as inner ones.
  const auto encode = [&](const Sentence& s) {
    Sentence out{enc.space_marker};
    for (auto& c : char_encode(s, enc)) out.push_back(std::move(c));
    out.push_back(enc.space_marker);
    return out;
  };
  for (const auto& s : hyps) h.push_back(encode(s));
  for (const auto& s : refs) r.push_back(encode(s));
  return corpus_bleu(h, r, kMaxBleuOrder);
}

double OovReport::reduction_vs(const OovReport& baseline) const {
  if (baseline.untranslated == 0) return 0.0;
  return 100.0 * (static_cast<double>(baseline.untranslated) - static_cast<double>(untranslated)) /
         static_cast<double>(baseline.untranslated);
}

OovReport& OovReport::operator+=(const OovReport& other) {
  untranslated += other.untranslated;
  total_words += other.total_words;
  return *this;
}

OovReport count_untranslated(std::span<const MarkedSentence> hyps) {
  OovReport report;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto& h = hyps[i];
    if (h.oov.size() != h.tokens.size()) {
      throw std::invalid_argument("sentence " + std::to_string(i) +
                                  " has no untranslated-word markup for its tokens");
    }
    report.total_words += h.tokens.size();
    for (bool flag : h.oov) report.untranslated += flag ? 1 : 0;
  }
  return report;
}

double length_ratio(std::span<const Sentence> hyps, std::span<const Sentence> refs) {
  check_sizes(hyps.size(), refs.size());
  std::size_t h = 0, r = 0;
  for (const auto& s : hyps) h += s.size();
  for (const auto& s : refs) r += s.size();
  if (r == 0) throw std::invalid_argument("length ratio: reference corpus is empty");
  return static_cast<double>(h) / static_cast<double>(r);
}

void write_report_text(std::ostream& out, const BleuReport& report, std::string_view label) {
  out << label << " = " << format_double(report.bleu) << " (";
  for (std::size_t n = 0; n < report.precisions.size(); ++n) {
    if (n) out << "/";
    out << format_double(100.0 * report.precisions[n]);
  }
  out << ", BP=" << format_double(report.brevity_penalty) << ", ratio=" << format_double(report.length_ratio)
      << ", hyp_len=" << report.hyp_length << ", ref_len=" << report.ref_length << ")\n";
}

void write_report_records(std::ostream& out, const BleuReport& report, std::string_view prefix) {
  out << prefix << "bleu=" << format_double(report.bleu) << "\n";
  for (std::size_t n = 0; n < report.precisions.size(); ++n) {
    out << prefix << "precision_" << (n + 1) << "=" << format_double(report.precisions[n]) << "\n";
  }
  out << prefix << "brevity_penalty=" << format_double(report.brevity_penalty) << "\n";
  out << prefix << "length_ratio=" << format_double(report.length_ratio) << "\n";
  out << prefix << "hyp_length=" << report.hyp_length << "\n";
  out << prefix << "ref_length=" << report.ref_length << "\n";
}

}  // namespace charpivot
