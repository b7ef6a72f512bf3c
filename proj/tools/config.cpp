#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kanerva/errors.hpp"

namespace kanerva::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const OptionSpec* find_spec(const std::vector<OptionSpec>& specs, const std::string& key) {
  for (const auto& s : specs)
    if (s.key == key) return &s;
  return nullptr;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError("invalid value '" + value + "' for '" + key + "': " + why);
}

bool parse_int(const std::string& text, std::int64_t& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && !text.empty();
}

void check_value(const OptionSpec& s, const std::string& value) {
  switch (s.kind) {
    case Kind::Int: {
      std::int64_t v;
      if (!parse_int(value, v)) bad_value(s.key, value, "expected an integer");
      break;
    }
    case Kind::Real: {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        bad_value(s.key, value, "expected a number");
      }
      if (used != value.size() || !std::isfinite(v)) bad_value(s.key, value, "expected a finite number");
      break;
    }
    case Kind::Bool:
      if (value != "true" && value != "false") bad_value(s.key, value, "expected true or false");
      break;
    case Kind::Choice:
      if (std::find(s.choices.begin(), s.choices.end(), value) == s.choices.end()) {
        std::string all;
        for (const auto& c : s.choices) all += (all.empty() ? "" : ", ") + c;
        bad_value(s.key, value, "expected one of " + all);
      }
      break;
    case Kind::Text:
    case Kind::Path:
      break;
  }
}

}  // namespace

Settings::Settings(std::string command, const std::vector<OptionSpec>& specs, std::map<std::string, std::string> values)
    : command_(std::move(command)), specs_(specs), values_(std::move(values)) {
  for (const auto& s : specs_) check_value(s, values_.at(s.key));
}

const OptionSpec& Settings::spec(const std::string& key) const {
  const OptionSpec* s = find_spec(specs_, key);
  if (!s) throw ConfigError("command '" + command_ + "' has no setting '" + key + "'");
  return *s;
}

std::int64_t Settings::integer(const std::string& key) const {
  spec(key);
  std::int64_t v = 0;
  parse_int(values_.at(key), v);
  return v;
}

std::int64_t Settings::positive(const std::string& key) const {
  const auto v = integer(key);
  if (v <= 0) bad_value(key, values_.at(key), "must be positive");
  return v;
}

std::int64_t Settings::nonnegative(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) bad_value(key, values_.at(key), "must be nonnegative");
  return v;
}

std::uint64_t Settings::seed() const { return static_cast<std::uint64_t>(nonnegative("seed")); }

double Settings::real(const std::string& key) const {
  spec(key);
  return std::stod(values_.at(key));
}

bool Settings::flag(const std::string& key) const {
  spec(key);
  return values_.at(key) == "true";
}

const std::string& Settings::text(const std::string& key) const {
  spec(key);
  return values_.at(key);
}

std::vector<std::int64_t> Settings::int_list(const std::string& key) const {
  std::vector<std::int64_t> out;
  std::stringstream ss(text(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::int64_t v;
    if (!parse_int(trim(item), v) || v <= 0) bad_value(key, values_.at(key), "expected a comma-separated list of positive integers");
    out.push_back(v);
  }
  if (out.empty()) bad_value(key, values_.at(key), "list is empty");
  return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path,
                                                    const std::vector<OptionSpec>& specs) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!find_spec(specs, key)) throw ConfigError(path.string() + ":" + std::to_string(number) + ": unknown key '" + key + "'");
    if (!out.emplace(key, value).second)
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": key '" + key + "' given twice");
  }
  return out;
}

Settings resolve(const std::string& command, const std::vector<OptionSpec>& specs,
                 const std::map<std::string, std::string>& file_values,
                 const std::map<std::string, std::string>& flag_values) {
  std::map<std::string, std::string> values;
  for (const auto& s : specs) values[s.key] = s.default_value;
  for (const auto& [k, v] : file_values) {
    if (!find_spec(specs, k)) throw ConfigError("unknown key '" + k + "' for command '" + command + "'");
    values[k] = v;
  }
  for (const auto& [k, v] : flag_values) {
    if (!find_spec(specs, k)) throw ConfigError("unknown key '" + k + "' for command '" + command + "'");
    values[k] = v;
  }
  return Settings(command, specs, std::move(values));
}

}  // namespace kanerva::cli
