#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "protonorm/federation.hpp"

namespace protonorm {

inline constexpr std::string_view kToolVersion = "0.3.0";

/// One `key=value` setting understood by the config file and the CLI.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(FederationConfig&, const std::string&)> set;
  std::function<std::string(const FederationConfig&)> get;
};

/// Every accepted key, in manifest order.
const std::vector<ConfigKey>& config_keys();

/// `--` flag spelling of a key: underscores become hyphens.
std::string flag_name(std::string_view key);

using Assignments = std::vector<std::pair<std::string, std::string>>;

/// Parses `key=value` lines; blank lines and `#` comments are skipped. Repeated
/// keys are rejected.
Assignments parse_config_text(std::string_view text);
Assignments read_config_file(const std::filesystem::path& path);

struct RunManifest {
  FederationConfig config;
  std::string tool_version{kToolVersion};
  std::string out_dir;
  std::vector<std::string> explicit_keys;
  std::vector<std::string> unused_keys;  // set explicitly but ignored by the chosen mode
  std::string started_at;
  std::string finished_at;
};

/// Applies `assignments` in order on top of the defaults (later entries win),
/// validates, and records which explicit keys the chosen mode will ignore.
/// Throws ConfigError naming the key for unknown keys, malformed values and
/// constraint violations.
RunManifest resolve_config(const Assignments& assignments);

/// Resolved configuration as `key=value` lines, all defaults materialized.
std::string serialize_config(const FederationConfig& config);

/// Metadata lines are `#` comments, so a manifest is itself a valid config file.
void write_manifest(std::ostream& out, const RunManifest& manifest);

}  // namespace protonorm
