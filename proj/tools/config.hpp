#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace kanerva::cli {

enum class Kind { Int, Real, Text, Path, Bool, Choice };

struct OptionSpec {
  std::string key;
  Kind kind;
  std::string default_value;
  std::string help;
  std::vector<std::string> choices = {};
};

/// Fully resolved key=value settings of one command. Values are kept as text
/// so the manifest records exactly what ran.
class Settings {
 public:
  Settings(std::string command, const std::vector<OptionSpec>& specs, std::map<std::string, std::string> values);

  const std::string& command() const { return command_; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::int64_t integer(const std::string& key) const;
  std::int64_t positive(const std::string& key) const;
  std::int64_t nonnegative(const std::string& key) const;
  std::uint64_t seed() const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  const std::string& text(const std::string& key) const;
  std::vector<std::int64_t> int_list(const std::string& key) const;

 private:
  const OptionSpec& spec(const std::string& key) const;

  std::string command_;
  std::vector<OptionSpec> specs_;
  std::map<std::string, std::string> values_;
};

/// Flat `key = value` file; `#` starts a comment. Unknown or repeated keys are
/// rejected with the offending key in the message.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path,
                                                    const std::vector<OptionSpec>& specs);

/// defaults < config file < flags.
Settings resolve(const std::string& command, const std::vector<OptionSpec>& specs,
                 const std::map<std::string, std::string>& file_values,
                 const std::map<std::string, std::string>& flag_values);

}  // namespace kanerva::cli
