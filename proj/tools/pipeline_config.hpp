#pragma once

// Declarative key=value configuration for the command-line pipeline, and the
// manifest written by every run.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "charpivot/pivot.hpp"

namespace charpivot::cli {

/// Bad usage or configuration; exit status 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class KeyKind { text, integer, real, boolean, input_path, output_path };

struct KeySpec {
  std::string name;
  std::string default_value;
  KeyKind kind;
  std::string help;
};

/// Every recognised key with its default. "auto" defaults depend on level.
const std::vector<KeySpec>& known_keys();

class PipelineConfig {
 public:
  PipelineConfig();

  /// Reads "key = value" lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  /// Applies "--key value" or "--key=value" arguments.
  void apply_overrides(const std::vector<std::string>& args);
  /// Throws ConfigError for unknown keys (at set time), malformed numbers and
  /// input paths that do not exist. Resolves "auto" values.
  void resolve();

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const { return !get(key).empty(); }
  long long integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::filesystem::path path(const std::string& key) const;
  /// Comma-separated list.
  std::vector<std::string> list(const std::string& key) const;
  /// Throws ConfigError when the key is empty.
  const std::string& require(const std::string& key) const;

  Level level() const { return parse_level(get("level")); }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }
  int jobs() const { return static_cast<int>(integer("jobs")); }
  std::filesystem::path out_dir() const { return path("out"); }

  SystemConfig system_config() const;
  /// As system_config() but with level defaults for keys left at "auto".
  SystemConfig system_config_for(Level level) const;
  DecoderOptions decoder_options() const;
  TuneOptions tune_options() const;
  CharEncoding encoding() const;

  /// Sorted "key=value" lines of the resolved configuration.
  std::string text() const;
  /// SHA-256 of text() without execution-only keys (jobs, out).
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> auto_keys_;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Records a run: command, seed, configuration and checksums of the artifacts
/// it produced. Written on success and on failure.
class Manifest {
 public:
  Manifest(std::string command, const PipelineConfig& config);

  /// Registers a file, or every regular file below a directory.
  void add_artifact(const std::filesystem::path& path);
  /// Writes <out>/<command>.manifest. A failed run is marked as such and its
  /// artifacts flagged as partial.
  void write(bool ok, const std::string& error = {}) const;

 private:
  std::string command_;
  const PipelineConfig& config_;
  std::string started_;
  std::vector<std::filesystem::path> artifacts_;
};

}  // namespace charpivot::cli
