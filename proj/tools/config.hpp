#pragma once

#include "lrm/io.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace lrm::cli {

// exit 2
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// exit 3
struct MissingDependency : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every accepted key with its default value; the schema is derived from it.
json default_config();

// JSON Schema (draft-07) generated from the defaults: types, no extra keys.
json config_schema();

// Checks that every key of `user` exists in `ref` with a compatible type;
// throws ConfigError naming the JSON pointer of the first offending key.
void check_against(const json& user, const json& ref, const std::string& where = "");

// "a.b.c=value"; value parsed as JSON when possible, else taken as a string.
void apply_override(json& user, const std::string& assignment);

// defaults <- file <- overrides, validated.
json load_config(const std::string& path, const std::vector<std::string>& overrides);

// hash of the canonical config without the output location
std::string config_hash(const json& cfg);

}  // namespace lrm::cli
