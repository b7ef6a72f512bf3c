#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "kanerva/errors.hpp"

namespace {

using kanerva::cli::Command;
using kanerva::cli::Kind;

struct Bound {
  const Command* command = nullptr;
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> text;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kanerva machine: training, evaluation and classical sparse distributed memory"};
  app.require_subcommand(1);

  std::vector<Bound> bound;
  bound.reserve(kanerva::cli::commands().size());
  for (const auto& cmd : kanerva::cli::commands()) {
    Bound& b = bound.emplace_back();
    b.command = &cmd;
    b.app = app.add_subcommand(cmd.name, cmd.help);
    b.app->add_option("--config", b.config_path, "key = value file; flags take precedence");
    for (const auto& spec : cmd.specs) {
      if (spec.kind == Kind::Bool) {
        b.flags[spec.key] = false;
        b.options[spec.key] = b.app->add_flag("--" + spec.key + ",!--no-" + spec.key, b.flags[spec.key], spec.help);
      } else {
        b.text[spec.key];
        b.options[spec.key] =
            b.app->add_option("--" + spec.key, b.text[spec.key], spec.help + " [" + spec.default_value + "]");
      }
    }
  }
  std::string manifest, replay_out;
  CLI::App* replay = app.add_subcommand("replay", "re-run a command from its manifest");
  replay->add_option("manifest", manifest, "manifest.json of an earlier run")->required();
  replay->add_option("--out", replay_out, "output directory (default: the recorded one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (replay->parsed()) return kanerva::cli::replay(manifest, replay_out);
    for (auto& b : bound) {
      if (!b.app->parsed()) continue;
      std::map<std::string, std::string> file_values;
      if (!b.config_path.empty()) file_values = kanerva::cli::read_config_file(b.config_path, b.command->specs);
      std::map<std::string, std::string> flag_values;
      for (const auto& [key, opt] : b.options) {
        if (opt->count() == 0) continue;
        flag_values[key] = b.flags.contains(key) ? (b.flags[key] ? "true" : "false") : b.text[key];
      }
      const auto settings = kanerva::cli::resolve(b.command->name, b.command->specs, file_values, flag_values);
      return b.command->run(settings);
    }
  } catch (const kanerva::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
