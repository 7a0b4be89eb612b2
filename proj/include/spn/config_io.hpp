#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"
#include "spn/network.hpp"

namespace spn {

inline constexpr std::string_view kNetworkSchema = "spn-network/1";

nlohmann::json instance_to_json(const Instance& inst);
// Throws FormatError on missing fields, wrong shapes or an unknown schema id.
Instance instance_from_json(const nlohmann::json& doc);

std::string instance_to_text(const Instance& inst);
Instance instance_from_text(const std::string& text);

Instance load_instance(const std::string& path);
void save_instance(const std::string& path, const Instance& inst);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Hash of the canonical (compact, key-sorted) JSON form of the instance.
std::uint64_t config_hash(const Instance& inst);
std::string hash_hex(std::uint64_t hash);

// Flat integer record "[z..., n...]" used in logs.
std::string format_state(const SystemState& state);
SystemState parse_state(const NetworkConfig& cfg, const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace spn
