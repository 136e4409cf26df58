// charpivot: command-line pipeline. Every subcommand takes --config FILE and
// --key value overrides; `charpivot keys` lists the keys.

#include <CLI11.hpp>

#include <iostream>

#include "charpivot/util.hpp"
#include "commands.hpp"

namespace {

using namespace charpivot::cli;

void print_keys() {
  for (const auto& k : known_keys()) {
    std::cout << k.name << " = " << k.default_value;
    if (!k.help.empty()) std::cout << "\t# " << k.help;
    std::cout << '\n';
  }
}

std::vector<int> parse_sweep(const std::string& text) {
  std::vector<int> out;
  for (const auto& item : charpivot::split(text, ",")) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--ngram expects integers like 1,2,3, got '" + text + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Character-level pivot translation pipeline"};
  app.require_subcommand(1);

  struct Sub {
    const Command* command;
    CLI::App* app;
    std::string config;
    std::string ngram;
    bool inverse = false;
  };
  std::vector<Sub> subs;
  subs.reserve(commands().size());
  for (const auto& c : commands()) {
    subs.push_back({&c, nullptr, {}, {}, false});
    auto& s = subs.back();
    s.app = app.add_subcommand(c.name, c.help);
    s.app->allow_extras();
    s.app->add_option("--config", s.config, "key = value configuration file");
    if (c.name == "encode") s.app->add_flag("--inverse", s.inverse, "decode characters back to words");
    if (c.name == "align") s.app->add_option("--ngram", s.ngram, "comma-separated n-gram orders to sweep");
  }
  auto* keys = app.add_subcommand("keys", "list configuration keys and defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  if (keys->parsed()) {
    print_keys();
    return 0;
  }

  for (auto& s : subs) {
    if (!s.app->parsed()) continue;
    PipelineConfig config;
    CommandFlags flags;
    try {
      if (!s.config.empty()) config.load_file(s.config);
      config.apply_overrides(s.app->remaining());
      config.resolve();
      flags.inverse = s.inverse;
      if (!s.ngram.empty()) flags.ngram_sweep = parse_sweep(s.ngram);
    } catch (const std::exception& e) {
      std::cerr << "charpivot " << s.command->name << ": " << e.what() << '\n';
      return 1;
    }
    Manifest manifest(s.command->name, config);
    try {
      s.command->run(config, flags, manifest);
    } catch (const ConfigError& e) {
      std::cerr << "charpivot " << s.command->name << ": " << e.what() << '\n';
      manifest.write(false, e.what());
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "charpivot " << s.command->name << ": " << e.what() << '\n';
      manifest.write(false, e.what());
      return 2;
    }
    manifest.write(true);
    return 0;
  }
  return 1;
}
