#include "pipeline_config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "charpivot/util.hpp"

namespace charpivot::cli {

const std::vector<KeySpec>& known_keys() {
  using K = KeyKind;
  static const std::vector<KeySpec> keys{
      {"seed", "1", K::integer, "random seed for subsetting and tuning"},
      {"jobs", "1", K::integer, "worker threads"},
      {"out", ".", K::output_path, "output directory"},
      {"level", "word", K::text, "word or character"},
      {"space_marker", "▁", K::text, "marker replacing spaces at character level"},
      {"source_lang", "src", K::text, "source language tag"},
      {"target_lang", "tgt", K::text, "target language tag"},
      {"source", "", K::input_path, "training source file"},
      {"target", "", K::input_path, "training target file"},
      {"dev_source", "", K::input_path, "tuning source file"},
      {"dev_target", "", K::input_path, "tuning reference file"},
      {"test_source", "", K::input_path, "held-out source file"},
      {"test_target", "", K::input_path, "held-out reference file"},
      {"input", "", K::input_path, "input sentences"},
      {"output", "", K::output_path, "output file (encode)"},
      {"hypothesis", "", K::input_path, "system output to evaluate"},
      {"hypothesis_markup", "", K::input_path, "untranslated-word markup of the hypothesis"},
      {"reference", "", K::input_path, "reference translations"},
      {"lm_text", "", K::input_path, "extra target-language text for the LM"},
      {"alignments", "", K::input_path, "alignment file (extract)"},
      {"phrase_table", "", K::input_path, "phrase table file (prune)"},
      {"corpus_size", "0", K::integer, "sentence pairs behind a phrase table; 0 counts the source file"},
      {"same_language_threshold", "0.7", K::real, "drop a document pair whose cross BLEU exceeds this"},
      {"charset_filter", "none", K::text, "none, mk-source or bg-source"},
      {"subset_size", "0", K::integer, "pairs to keep (subset)"},
      {"encode_ngram", "1", K::integer, "character n-gram order (encode)"},
      {"align_ngram", "auto", K::integer, "character n-gram order for alignment"},
      {"em_model", "ibm2", K::text, "ibm1 or ibm2"},
      {"ibm1_iterations", "5", K::integer, "Model 1 EM iterations"},
      {"ibm2_iterations", "5", K::integer, "Model 2 EM iterations"},
      {"use_null", "true", K::boolean, "allow NULL alignments"},
      {"lm_order", "auto", K::integer, "language model order"},
      {"max_phrase_length", "auto", K::integer, "longest extracted phrase"},
      {"prune", "false", K::boolean, "significance pruning during train"},
      {"prune_epsilon", "0.01", K::real, "epsilon of the alpha+epsilon threshold"},
      {"beam", "100", K::integer, "hypotheses per stack"},
      {"distortion_limit", "auto", K::integer, "maximum jump; 0 monotone, negative unlimited"},
      {"table_limit", "20", K::integer, "translation options per span"},
      {"k", "1", K::integer, "k-best list size (decode)"},
      {"unique", "false", K::boolean, "distinct surfaces in k-best lists"},
      {"tune_method", "mert", K::text, "mert or pro"},
      {"tune_k", "100", K::integer, "k-best size while tuning"},
      {"outer_iterations", "10", K::integer, "decode-optimize rounds"},
      {"min_improvement", "0.01", K::real, "stop when dev BLEU gains less"},
      {"mert_restarts", "20", K::integer, "random restarts"},
      {"mert_directions", "20", K::integer, "random directions per iteration"},
      {"mert_iterations", "100", K::integer, "line-search rounds per start"},
      {"pro_samples", "5000", K::integer, "sampled pairs per sentence"},
      {"pro_keep", "50", K::integer, "pairs kept per sentence"},
      {"pro_min_diff", "0.05", K::real, "minimum sentence BLEU gap of a pair"},
      {"pro_l2", "0.001", K::real, "L2 regularization"},
      {"pro_iterations", "200", K::integer, "optimizer iterations"},
      {"pro_interpolation", "0.1", K::real, "weight of the new classifier"},
      {"system", "", K::input_path, "trained system directory"},
      {"first_system", "", K::input_path, "source-pivot system (cascade)"},
      {"second_system", "", K::input_path, "pivot-target system (cascade)"},
      {"cascade_k1", "10", K::integer, "pivot hypotheses per sentence"},
      {"cascade_k2", "10", K::integer, "target hypotheses per pivot hypothesis"},
      {"cascade_unique", "true", K::boolean, "distinct pivot hypotheses"},
      {"paths", "", K::text, "name=dir[+dir],... translation paths (global-tune)"},
      {"global_tune_method", "pro", K::text, "mert or pro (global-tune)"},
      {"ensemble_cascade_k", "20", K::integer, "per-step k of cascades in ensembles"},
      {"ensemble_direct_k", "100", K::integer, "k of direct paths in ensembles"},
      {"concat_source", "", K::input_path, "real bitext source appended to synthetic data"},
      {"concat_target", "", K::input_path, "real bitext target appended to synthetic data"},
      {"curve_sizes", "1000,5000,10000,25000,50000,100000", K::text, "training sizes (curve)"},
      {"curve_levels", "word,character", K::text, "levels (curve)"},
  };
  return keys;
}

namespace {

const KeySpec* find_key(const std::string& name) {
  for (const auto& k : known_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex(const unsigned char* data, unsigned int n) {
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", data[i]);
    out += buf;
  }
  return out;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw std::runtime_error("SHA-256 unavailable");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  void update(const char* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string finish() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    EVP_DigestFinal_ex(ctx_, md, &n);
    return hex(md, n);
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.finish();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.finish();
}

PipelineConfig::PipelineConfig() {
  for (const auto& k : known_keys()) values_[k.name] = k.default_value;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (find_key(key) == nullptr) throw ConfigError("unknown configuration key '" + key + "'");
  values_[key] = value;
}

const std::string& PipelineConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

void PipelineConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void PipelineConfig::apply_overrides(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() == 2) throw ConfigError("unexpected argument '" + a + "'");
    std::string key = a.substr(2);
    std::string value;
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.erase(eq);
    } else {
      if (i + 1 >= args.size()) throw ConfigError("missing value for --" + key);
      value = args[++i];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    set(key, value);
  }
}

long long PipelineConfig::integer(const std::string& key) const {
  const auto& v = get(key);
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + " must be an integer, got '" + v + "'");
  return out;
}

double PipelineConfig::real(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + " must be a number, got '" + v + "'");
}

bool PipelineConfig::flag(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + " must be true or false, got '" + v + "'");
}

std::filesystem::path PipelineConfig::path(const std::string& key) const { return get(key); }

std::vector<std::string> PipelineConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  for (auto& item : split(get(key), ",")) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

const std::string& PipelineConfig::require(const std::string& key) const {
  const auto& v = get(key);
  if (v.empty()) throw ConfigError("missing required key " + key);
  return v;
}

void PipelineConfig::resolve() {
  try {
    parse_level(get("level"));
    parse_tune_method(get("tune_method"));
    parse_tune_method(get("global_tune_method"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const bool chars = level() == Level::character;
  const SystemConfig defaults = SystemConfig::defaults_for(level());
  auto fill = [&](const std::string& key, long long value) {
    if (get(key) != "auto") return;
    auto_keys_.insert(key);
    values_[key] = std::to_string(value);
  };
  fill("align_ngram", chars ? defaults.align_ngram : 1);
  fill("lm_order", defaults.lm_order);
  fill("max_phrase_length", defaults.max_phrase_length);
  fill("distortion_limit", defaults.decoder.distortion_limit);
  const auto& cf = get("charset_filter");
  if (cf != "none" && cf != "mk-source" && cf != "bg-source") {
    throw ConfigError("charset_filter must be none, mk-source or bg-source");
  }
  if (get("em_model") != "ibm1" && get("em_model") != "ibm2") throw ConfigError("em_model must be ibm1 or ibm2");
  for (const auto& k : known_keys()) {
    switch (k.kind) {
      case KeyKind::integer:
        integer(k.name);
        break;
      case KeyKind::real:
        real(k.name);
        break;
      case KeyKind::boolean:
        flag(k.name);
        break;
      case KeyKind::input_path:
        if (has(k.name) && !std::filesystem::exists(path(k.name))) {
          throw ConfigError(k.name + ": no such file or directory: " + get(k.name));
        }
        break;
      default:
        break;
    }
  }
  if (jobs() < 1) throw ConfigError("jobs must be at least 1");
  if (integer("beam") < 1 || integer("k") < 1 || integer("tune_k") < 1) throw ConfigError("beam, k and tune_k must be positive");
  const auto n = integer("encode_ngram");
  if (n < 1 || n > 10) throw ConfigError("encode_ngram must be between 1 and 10");
}

CharEncoding PipelineConfig::encoding() const {
  CharEncoding enc;
  enc.space_marker = get("space_marker");
  return enc;
}

DecoderOptions PipelineConfig::decoder_options() const {
  DecoderOptions d;
  d.beam = static_cast<std::size_t>(integer("beam"));
  d.distortion_limit = static_cast<int>(integer("distortion_limit"));
  d.table_limit = static_cast<std::size_t>(integer("table_limit"));
  d.k = static_cast<std::size_t>(integer("k"));
  d.unique = flag("unique");
  return d;
}

SystemConfig PipelineConfig::system_config() const {
  SystemConfig c = SystemConfig::defaults_for(level());
  c.level = level();
  c.align_ngram = static_cast<int>(integer("align_ngram"));
  c.lm_order = static_cast<int>(integer("lm_order"));
  c.max_phrase_length = static_cast<int>(integer("max_phrase_length"));
  if (flag("prune")) c.prune_epsilon = real("prune_epsilon");
  c.em.model = get("em_model") == "ibm1" ? AlignModel::ibm1 : AlignModel::ibm2;
  c.em.ibm1_iterations = static_cast<int>(integer("ibm1_iterations"));
  c.em.ibm2_iterations = static_cast<int>(integer("ibm2_iterations"));
  c.em.use_null = flag("use_null");
  c.decoder = decoder_options();
  c.decoder.k = 1;
  c.decoder.unique = false;
  c.encoding = encoding();
  c.jobs = jobs();
  return c;
}

SystemConfig PipelineConfig::system_config_for(Level level) const {
  SystemConfig c = system_config();
  const SystemConfig d = SystemConfig::defaults_for(level);
  c.level = level;
  if (auto_keys_.count("align_ngram")) c.align_ngram = level == Level::character ? d.align_ngram : 1;
  if (auto_keys_.count("lm_order")) c.lm_order = d.lm_order;
  if (auto_keys_.count("max_phrase_length")) c.max_phrase_length = d.max_phrase_length;
  if (auto_keys_.count("distortion_limit")) c.decoder.distortion_limit = d.decoder.distortion_limit;
  return c;
}

TuneOptions PipelineConfig::tune_options() const {
  TuneOptions t;
  t.method = parse_tune_method(get("tune_method"));
  t.outer_iterations = static_cast<int>(integer("outer_iterations"));
  t.min_improvement = real("min_improvement");
  t.mert.restarts = static_cast<int>(integer("mert_restarts"));
  t.mert.random_directions = static_cast<int>(integer("mert_directions"));
  t.mert.max_iterations = static_cast<int>(integer("mert_iterations"));
  t.mert.seed = seed();
  t.mert.jobs = jobs();
  t.pro.samples = static_cast<std::size_t>(integer("pro_samples"));
  t.pro.keep = static_cast<std::size_t>(integer("pro_keep"));
  t.pro.min_diff = real("pro_min_diff");
  t.pro.l2 = real("pro_l2");
  t.pro.iterations = static_cast<int>(integer("pro_iterations"));
  t.pro.interpolation = real("pro_interpolation");
  t.pro.seed = seed();
  return t;
}

std::string PipelineConfig::text() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
  return out.str();
}

std::string PipelineConfig::hash() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) {
    if (k == "jobs" || k == "out") continue;
    out << k << '=' << v << '\n';
  }
  return sha256_hex(out.str());
}

Manifest::Manifest(std::string command, const PipelineConfig& config)
    : command_(std::move(command)), config_(config), started_(timestamp()) {}

void Manifest::add_artifact(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    artifacts_.insert(artifacts_.end(), files.begin(), files.end());
  } else {
    artifacts_.push_back(path);
  }
}

void Manifest::write(bool ok, const std::string& error) const {
  const auto dir = config_.out_dir();
  std::filesystem::create_directories(dir);
  const auto file = dir / (command_ + ".manifest");
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "command=" << command_ << '\n'
      << "status=" << (ok ? "ok" : "failed") << '\n';
  if (!ok) out << "error=" << error << '\n';
  out << "seed=" << config_.seed() << '\n'
      << "config_sha256=" << config_.hash() << '\n'
      << "started=" << started_ << '\n'
      << "finished=" << timestamp() << '\n'
      << "[config]\n"
      << config_.text() << "[artifacts]\n";
  for (const auto& a : artifacts_) {
    if (!std::filesystem::exists(a)) {
      out << "missing  " << a.string() << '\n';
      continue;
    }
    out << sha256_file(a) << "  " << a.string() << (ok ? "" : "  partial") << '\n';
  }
}

}  // namespace charpivot::cli
