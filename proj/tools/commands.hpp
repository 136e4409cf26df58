#pragma once

#include <string>
#include <vector>

#include "pipeline_config.hpp"

namespace charpivot::cli {

/// Options given as real command-line flags rather than config keys.
struct CommandFlags {
  bool inverse = false;            // encode
  std::vector<int> ngram_sweep;    // align
};

struct Command {
  std::string name;
  std::string help;
  void (*run)(const PipelineConfig&, const CommandFlags&, Manifest&);
};

const std::vector<Command>& commands();

}  // namespace charpivot::cli
