#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace charpivot {

std::vector<std::string> split_whitespace(std::string_view line);
std::vector<std::string> split(std::string_view text, std::string_view delimiter);
std::string join(const std::vector<std::string>& tokens, std::string_view delimiter = " ");
std::string trim(std::string_view text);

/// Formats a double with enough digits to round-trip through text.
std::string format_double(double value);

/// Deterministic random source. Draws are specified here rather than through
/// <random> distributions so that results are identical across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  /// Uniform double in [0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Callers write results
/// into pre-sized, index-addressed storage so output order never depends on
/// scheduling.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

inline void hash_combine(std::size_t& seed, std::size_t value) {
  seed ^= value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
}

}  // namespace charpivot
