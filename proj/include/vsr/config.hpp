// SPDX-License-Identifier: Apache-2.0
/**
 * @file   config.hpp
 * @brief  Flat key=value run configuration.
 *
 * One `key = value` pair per line; `#` starts a comment. Keys are dotted
 * (`train.epochs`) but the namespace is flat. Unknown keys, repeated keys and
 * malformed values are errors carrying the line number.
 */
#ifndef VSR_CONFIG_HPP
#define VSR_CONFIG_HPP

#include <vsr/distill.hpp>
#include <vsr/synth.hpp>
#include <vsr/trainer.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vsr {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  GeneratorConfig gen;
  SplitCounts counts;
  std::uint64_t data_seed = 7;
  TeacherConfig teacher;
  TrainSetup setup;

  /// Every key, in table order, with its current value.
  std::string to_text() const;
  void validate() const;
};

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string doc;
};

/// The documented key table with default values.
std::vector<ConfigKey> config_keys();

/// Applies `text` on top of `base`.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path &path, RunConfig base = {});
/// Sets one key (same parsing rules as a config line).
void set_config_value(RunConfig &cfg, std::string_view key, std::string_view value);

} // namespace vsr

#endif // VSR_CONFIG_HPP
