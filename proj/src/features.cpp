#include "charpivot/features.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "charpivot/util.hpp"

namespace charpivot {

const std::vector<std::string>& decoder_feature_names() {
  static const std::vector<std::string> names{
      std::string(feature::lm),           std::string(feature::phi_fwd),      std::string(feature::phi_rev),
      std::string(feature::lex_fwd),      std::string(feature::lex_rev),      std::string(feature::word_penalty),
      std::string(feature::phrase_penalty), std::string(feature::distortion), std::string(feature::oov)};
  return names;
}

FeatureWeights::FeatureWeights(std::initializer_list<std::pair<const std::string, double>> init) {
  for (const auto& [name, value] : init) set(name, value);
}

FeatureWeights FeatureWeights::defaults() {
  return {{std::string(feature::lm), 0.5},
          {std::string(feature::phi_fwd), 0.2},
          {std::string(feature::phi_rev), 0.2},
          {std::string(feature::lex_fwd), 0.2},
          {std::string(feature::lex_rev), 0.2},
          {std::string(feature::word_penalty), 0.0},
          {std::string(feature::phrase_penalty), 0.0},
          {std::string(feature::distortion), -0.3},
          {std::string(feature::oov), -1.0}};
}

double FeatureWeights::get(std::string_view name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("no weight for feature " + std::string(name));
  return it->second;
}

double FeatureWeights::get_or(std::string_view name, double fallback) const {
  auto it = values_.find(name);
  return it == values_.end() ? fallback : it->second;
}

void FeatureWeights::set(const std::string& name, double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("weight for " + name + " is not finite");
  if (name.empty() || name.find_first_of(" \t=") != std::string::npos) {
    throw std::invalid_argument("invalid feature name '" + name + "'");
  }
  values_[name] = value;
}

std::vector<std::string> FeatureWeights::names() const {
  std::vector<std::string> out;
  for (const auto& [name, value] : values_) out.push_back(name);
  return out;
}

FeatureWeights FeatureWeights::scaled(double factor) const {
  FeatureWeights out;
  for (const auto& [name, value] : values_) out.set(name, value * factor);
  return out;
}

void FeatureWeights::write(std::ostream& out) const {
  for (const auto& [name, value] : values_) out << name << ' ' << format_double(value) << '\n';
}

void FeatureWeights::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out);
}

FeatureWeights FeatureWeights::read(std::istream& in) {
  FeatureWeights w;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_whitespace(line);
    if (fields.empty() || fields[0].front() == '#') continue;
    if (fields.size() != 2) throw std::runtime_error("weights line " + std::to_string(line_no) + ": expected 'name value'");
    if (w.contains(fields[0])) throw std::runtime_error("weights line " + std::to_string(line_no) + ": duplicate " + fields[0]);
    try {
      w.set(fields[0], std::stod(fields[1]));
    } catch (const std::logic_error& e) {
      throw std::runtime_error("weights line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return w;
}

FeatureWeights FeatureWeights::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read(in);
}

double rescore(const FeatureVector& features, const FeatureWeights& weights) {
  double total = 0.0;
  for (const auto& [name, value] : features) {
    if (!weights.contains(name)) throw std::invalid_argument("no weight for feature " + name);
    total += weights.get(name) * value;
  }
  return total;
}

}  // namespace charpivot
