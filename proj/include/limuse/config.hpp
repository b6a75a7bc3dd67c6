// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// `key = value` configuration files.

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "limuse/train.hpp"

namespace limuse {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Parses UTF-8 `key = value` lines; `#` starts a comment. Throws ConfigError
// on malformed lines, duplicate keys or unknown keys.
std::map<std::string, std::string> parse_key_values(const std::string& text,
                                                    const std::string& source);
RunConfig parse_run_config(const std::string& text, const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace limuse
