#pragma once

#include <filesystem>
#include <string>

#include "tdae/harness.hpp"

namespace tdae::config {

using immunize::ConfigError;

inline constexpr int kSchemaVersion = 1;

/// Parses the sectioned key = value format. `schema_version` is required; every other key is
/// optional and defaults as in ExperimentPlan. Unknown sections/keys, malformed values and
/// eps_v off the 1/255 grid are ConfigErrors naming the key. The result is validated.
harness::ExperimentPlan parse_config(const std::string& text);

/// Reads and parses a file; unreadable files raise io::IoError.
harness::ExperimentPlan load_config(const std::filesystem::path& path);

/// Canonical form: fixed section and key order, every key present, shortest round-trip numbers,
/// multiples of 1/255 written as "k/255" where shorter. parse_config(serialize_config(p)) == p.
std::string serialize_config(const harness::ExperimentPlan& plan);

/// Number literal as accepted in config values: decimal/scientific, or a fraction "a/b".
double parse_number(const std::string& text);
/// Shortest round-trip decimal, or "k/255" when the value is exactly k/255 and that is shorter.
std::string format_number(double value);

}  // namespace tdae::config
