#pragma once

#include <map>
#include <string>

#include "ingra/model.hpp"

namespace ingra {

// Flat key=value text: one pair per line, '#' starts a comment, blank lines
// ignored. Keys are the snake_case field names of ModelConfig.
std::map<std::string, std::string> parse_config_file(const std::string& path);

// Applies every entry onto cfg; unknown keys and unparseable values throw
// ConfigError naming the offender.
void apply_model_config(const std::map<std::string, std::string>& entries, ModelConfig& cfg);

} // namespace ingra
