#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "camsim/channel.hpp"
#include "camsim/geometry.hpp"
#include "camsim/mobility.hpp"

namespace camsim {

enum class PhaseMode : std::uint8_t { aligned, per_node_random };

struct BeaconConfig {
    /// Beacons per second; any integer from 1 up to the ticks per second.
    int rate_hz = 10;
    double tx_power_vehicle_dbm = 21.0;
    double tx_power_roadside_dbm = 21.0;
    int payload_bytes = 100;
    double candidate_radius_m = 1500.0;
    PhaseMode start_phase = PhaseMode::per_node_random;
    /// Per-node constant power offset, uniform in [lo, hi] dB.
    double power_offset_lo_db = 0.0;
    double power_offset_hi_db = 0.0;
};

void validate(const BeaconConfig& cfg, int ticks_per_second);

nlohmann::json to_json(const BeaconConfig& cfg);
BeaconConfig beacon_config_from_json(const nlohmann::json& j);

/// Nominal power for the node's role plus its per-node offset.
double effective_power(const NodeState& node, const BeaconConfig& cfg, std::uint64_t seed);

/// Emission grid of every node. Emission m of a node falls on tick
/// phase + floor(m * T / rate) with T ticks per second, so every aligned
/// one-second window holds exactly `rate` emissions.
class EmissionSchedule {
public:
    EmissionSchedule(const Scenario& scenario, const BeaconConfig& cfg, std::uint64_t seed);

    /// Emission index of the node at dense position `dense` on tick k, or -1.
    std::int64_t emission_at(std::size_t dense, std::size_t k) const;
    std::size_t phase(std::size_t dense) const { return phases_.at(dense); }
    int rate_hz() const { return rate_; }
    int ticks_per_second() const { return ticks_per_second_; }

private:
    int rate_;
    int ticks_per_second_;
    std::vector<int> slot_of_offset_;  // tick offset within a second -> emission slot, or -1
    std::vector<std::size_t> phases_;
};

/// Geometry and large-scale loss of one unordered node pair on one tick.
/// a < b index the tick's node span.
struct PairGeometry {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    double distance_m = 0.0;
    Obstruction obstruction;
    double loss_db = 0.0;
};

/// All pairs within `radius_m` where at least one side has want[i] set (all
/// pairs when want is empty), ordered by (a, b).
std::vector<PairGeometry> tick_geometry(std::span<const NodeState> nodes, const SpatialIndex& index,
                                        const ChannelConfig& cfg, double radius_m, std::span<const char> want,
                                        int workers = 1);

/// Receives the samples of one tick, ordered by (tx, rx).
using SampleSink = std::function<void(std::span<const LinkSample>)>;

struct RunStats {
    /// (node id, emissions) ascending by id.
    std::vector<std::pair<NodeId, std::uint64_t>> emissions;
    std::uint64_t samples = 0;
    std::uint64_t received = 0;
};

/// Runs the beacon simulation and streams every LinkSample to `sink` in
/// (time, tx, rx) order. Output does not depend on `workers`.
RunStats run(const Scenario& scenario, const BeaconConfig& beacon, const ChannelConfig& channel, std::uint64_t seed,
             const SampleSink& sink, int workers = 1);

struct SimLog {
    RunStats stats;
    std::vector<LinkSample> samples;
};

/// run() collected in memory.
SimLog simulate(const Scenario& scenario, const BeaconConfig& beacon, const ChannelConfig& channel, std::uint64_t seed,
                int workers = 1);

/// Streaming writer for the log CSV; the file appears atomically on close().
class LogWriter {
public:
    explicit LogWriter(const std::filesystem::path& path);
    ~LogWriter();
    LogWriter(const LogWriter&) = delete;
    LogWriter& operator=(const LogWriter&) = delete;

    void write(std::span<const LinkSample> samples);
    void close();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

void write_log_csv(const std::filesystem::path& path, std::span<const LinkSample> samples);
std::vector<LinkSample> read_log_csv(const std::filesystem::path& path);
/// Streams the log in file order, `batch` rows at a time.
void read_log_csv(const std::filesystem::path& path, const SampleSink& sink, std::size_t batch = 1 << 16);

}  // namespace camsim
