#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "camsim/mobility.hpp"

namespace camsim::cli {

/// Scenario document. `kind` selects the source:
///   highway / urban: generator parameters (HighwayConfig / UrbanConfig keys, plus `fleet`)
///   trace: `trace`, optional `obstacles`, `environment`, `tick_s`, `duration_s`,
///          `max_gap_s`, `projection` {origin_lat_deg, origin_lon_deg}
/// Any kind may add `static_nodes`. Relative paths resolve against `base_dir`.
struct ScenarioConfig {
    nlohmann::json doc;
    std::filesystem::path base_dir;

    /// Files the scenario reads, resolved.
    std::vector<std::filesystem::path> inputs() const;
};

ScenarioConfig load_scenario_config(const std::filesystem::path& path);

/// Parses and validates without building anything heavy.
void check(const ScenarioConfig& cfg);

Scenario build_scenario(const ScenarioConfig& cfg, std::uint64_t seed);

FleetConfig fleet_from_json(const nlohmann::json& j);
HighwayConfig highway_from_json(const nlohmann::json& j);
UrbanConfig urban_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace camsim::cli
