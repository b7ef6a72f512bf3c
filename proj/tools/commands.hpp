#pragma once

#include <functional>
#include <string>
#include <vector>

#include "config.hpp"

namespace kanerva::cli {

struct Command {
  std::string name;
  std::string help;
  std::vector<OptionSpec> specs;
  std::function<int(const Settings&)> run;
};

const std::vector<Command>& commands();
const Command& find_command(const std::string& name);

/// Re-runs the command recorded in a manifest, optionally into another
/// output directory.
int replay(const std::filesystem::path& manifest, const std::string& out_override);

}  // namespace kanerva::cli
