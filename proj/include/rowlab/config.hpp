#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rowlab/env.hpp"
#include "rowlab/ppo.hpp"

namespace rowlab::config {

inline constexpr int kSchemaVersion = 1;

/// Invalid configuration text. `line` and `column` are 1-based; 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0, int column = 0);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

struct TrainSettings {
  int iterations = 500;
  int checkpoint_every = 50;  // 0 = final checkpoint only
  int threads = 1;
};

struct BenchSettings {
  int trials = 15;
  double row_length = 100.0;
  bool deterministic = false;
  std::uint64_t seed = 1;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::string preset = "baseline";
  std::uint64_t seed = 1;
  env::Scenario scenario;
  ppo::PpoConfig ppo;
  TrainSettings train;
  BenchSettings bench;

  void validate() const;
};

/// Preset names: baseline, no-history, no-downsampling.
const std::vector<std::string>& preset_names();
/// Resets `cfg` to defaults and applies the named preset. Throws ConfigError.
RunConfig preset(std::string_view name);

/// Parses YAML on top of the preset named in the text (or `preset_override` when set),
/// rejecting unknown keys and ill-typed values with line-anchored ConfigErrors.
RunConfig parse_config(std::string_view text,
                       const std::optional<std::string>& preset_override = std::nullopt);
RunConfig load_config(const std::string& path,
                      const std::optional<std::string>& preset_override = std::nullopt);

/// Full effective configuration; parse_config(emit_config(c)) reproduces c exactly.
std::string emit_config(const RunConfig& cfg);

}  // namespace rowlab::config
