#pragma once

// Output plumbing shared by the command-line tools: fixed-format JSON and
// input digests.

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fluxcal {

inline constexpr const char* kToolName = "fluxcal";
extern const char* const kToolVersion;

/// Pretty-printed JSON with every float at 17 significant digits, so equal
/// values always produce equal bytes. Arrays of scalars stay on one line.
std::string dump_json(const nlohmann::json& j);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// {"tool", "version", "command", "inputs": [{"path", "sha256"}], "settings"}
nlohmann::json provenance(const std::string& command, const std::vector<std::filesystem::path>& inputs,
                          const nlohmann::json& settings);

}  // namespace fluxcal
