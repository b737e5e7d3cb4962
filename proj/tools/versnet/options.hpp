#pragma once

#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace versnet::cli {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options of one subcommand. Values come from the command line, then the
// --config JSON file (keys are the long flag names without dashes), then the
// defaults held by the bound variables.
class OptionSet {
 public:
  explicit OptionSet(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_file_, "JSON file with option values (command-line flags win)");
  }

  template <class T>
  CLI::Option* add(const std::string& flag, T& var, const std::string& help, bool required = false) {
    CLI::Option* opt = app_->add_option(flag, var, help)->capture_default_str();
    entries_.push_back({key_of(flag), opt, required, false,
                        [&var](const nlohmann::json& j) { var = j.get<T>(); },
                        [&var] { return nlohmann::json(var); }});
    return opt;
  }

  CLI::Option* add_flag(const std::string& flag, bool& var, const std::string& help) {
    CLI::Option* opt = app_->add_flag(flag, var, help);
    entries_.push_back({key_of(flag), opt, false, false,
                        [&var](const nlohmann::json& j) { var = j.get<bool>(); },
                        [&var] { return nlohmann::json(var); }});
    return opt;
  }

  /// Applies the --config file (if any) and enforces required options.
  void resolve();

  /// Every resolved value, keyed like the config file.
  nlohmann::json effective() const;

 private:
  struct Entry {
    std::string key;
    CLI::Option* opt;
    bool required;
    bool from_file;
    std::function<void(const nlohmann::json&)> set;
    std::function<nlohmann::json()> get;
  };

  static std::string key_of(const std::string& flag) {
    std::string k = flag.substr(flag.find_first_not_of('-'));
    const auto comma = k.find(',');
    return comma == std::string::npos ? k : k.substr(0, comma);
  }

  CLI::App* app_;
  std::string config_file_;
  std::vector<Entry> entries_;
};

}  // namespace versnet::cli
