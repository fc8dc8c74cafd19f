#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "desync/model.hpp"

namespace desync::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses the file, throwing IoError on filesystem trouble and ConfigError
// on malformed JSON.
nlohmann::json load_json_file(const std::string& path);

// Declarative scenario document, schema tag "scenario/1". Unknown keys are
// rejected. `manifest_seed` feeds the named sub-streams (noise, matrix
// generation) when the document does not pin them itself.
Scenario scenario_from_json(const nlohmann::json& j, std::uint64_t manifest_seed);

// Seed recorded in the document, if any.
std::uint64_t document_seed(const nlohmann::json& j, std::uint64_t fallback);

// Writes via a temp file plus rename so readers never observe partial
// output. Throws IoError.
void atomic_write(const std::string& path, const std::string& content);

}  // namespace desync::cli
