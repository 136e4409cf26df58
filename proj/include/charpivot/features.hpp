#pragma once

// Named feature vectors and log-linear weights.

#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace charpivot {

namespace feature {
inline constexpr std::string_view lm = "lm";
inline constexpr std::string_view phi_fwd = "phi_fwd";  // ln phi(tgt | src)
inline constexpr std::string_view phi_rev = "phi_rev";  // ln phi(src | tgt)
inline constexpr std::string_view lex_fwd = "lex_fwd";  // ln lex(tgt | src)
inline constexpr std::string_view lex_rev = "lex_rev";  // ln lex(src | tgt)
inline constexpr std::string_view word_penalty = "word_penalty";
inline constexpr std::string_view phrase_penalty = "phrase_penalty";
inline constexpr std::string_view distortion = "distortion";
inline constexpr std::string_view oov = "oov";
}  // namespace feature

/// Decoder features in canonical order.
const std::vector<std::string>& decoder_feature_names();

using FeatureVector = std::map<std::string, double, std::less<>>;

class FeatureWeights {
 public:
  FeatureWeights() = default;
  FeatureWeights(std::initializer_list<std::pair<const std::string, double>> init);

  /// Starting point for tuning.
  static FeatureWeights defaults();

  /// Throws std::out_of_range for an unknown name.
  double get(std::string_view name) const;
  double get_or(std::string_view name, double fallback) const;
  /// Throws std::invalid_argument for a non-finite value.
  void set(const std::string& name, double value);
  bool contains(std::string_view name) const { return values_.find(name) != values_.end(); }
  std::size_t size() const { return values_.size(); }
  std::vector<std::string> names() const;
  const std::map<std::string, double, std::less<>>& values() const { return values_; }

  FeatureWeights scaled(double factor) const;

  /// One "name value" pair per line, sorted by name.
  void write(std::ostream& out) const;
  void write(const std::filesystem::path& path) const;
  static FeatureWeights read(std::istream& in);
  static FeatureWeights read(const std::filesystem::path& path);

  friend bool operator==(const FeatureWeights&, const FeatureWeights&) = default;

 private:
  std::map<std::string, double, std::less<>> values_;
};

/// Weighted sum of the features. Throws std::invalid_argument if a feature has
/// no weight.
double rescore(const FeatureVector& features, const FeatureWeights& weights);

}  // namespace charpivot
