// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "asmil/trainer.hpp"

namespace asmil {

/// Flat `key = value` text, one pair per line, `#` starts a comment.
/// Unknown keys, duplicate keys and bad values raise ConfigError with the
/// key name and line number.
TrainConfig parse_config(const std::string& text);
/// IoError if the file cannot be read.
TrainConfig load_config(const std::string& path);

/// Applies one setting. ConfigError("<key>: <why>") on failure.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Every key with its value; reals use 17 significant digits so parsing the
/// output reproduces the config exactly.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);
std::string format_config(const TrainConfig& cfg);

/// Known keys in output order.
const std::vector<std::string>& config_keys();

}  // namespace asmil
