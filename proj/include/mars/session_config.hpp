#pragma once

#include "mars/exec_agents.hpp"
#include "mars/sim_engine.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace mars {

inline constexpr int kConfigVersion = 1;

/// A simulate/forecast/impact config after loading. Relative paths inside the
/// document resolve against the config file's directory.
///
///   { "version": 1, "instrument": "SYN", "seed": 7, "horizon_minutes": 30,
///     "flow": {"type": "noise"} | {"type": "replay", "log": "day.csv"}
///           | {"type": "count", "model": "m.cm", "batches": "m.bm"},
///     "starting_sequence": "warmup.csv",
///     "control": {"kind": "replay-curve", "returns": [...], "context_minutes": 0},
///     "agents": [{"type": "twap", "side": "buy", "total": 1000, ...}] }
struct LoadedConfig {
  SessionConfig session;
  std::vector<TwapConfig> twaps; // one per agent entry, in order
  nlohmann::json document;      // as read, for manifests
  std::uint64_t document_hash{0};
};

LoadedConfig parse_session_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
LoadedConfig load_session_config(const std::filesystem::path& path);

/// Reads a JSON file and checks the `version` field.
nlohmann::json read_versioned_json(const std::filesystem::path& path);

/// Digest of the canonical (key-sorted, compact) dump.
std::uint64_t json_hash(const nlohmann::json& j);

TwapConfig twap_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TwapConfig& c);
NoiseFlowParams noise_from_json(const nlohmann::json& j);

} // namespace mars
