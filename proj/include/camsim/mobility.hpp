#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "camsim/geometry.hpp"
#include "camsim/types.hpp"

namespace camsim {

/// Time-indexed node states over a fixed tick grid plus the static environment.
///
/// Tick k sits at time k * tick_s for k = 0 .. duration_s / tick_s (inclusive).
/// Each tick holds the nodes present at that instant, sorted by id.
class Scenario {
public:
    Scenario() = default;
    Scenario(Environment env, double tick_s, double duration_s, std::vector<ObstaclePolygon> obstacles);

    Environment environment() const { return environment_; }
    double tick_s() const { return tick_s_; }
    double duration_s() const { return duration_s_; }
    /// Number of stored ticks (duration / tick + 1).
    std::size_t tick_count() const { return ticks_.size(); }
    /// Ticks strictly before the end of the run; emissions happen only on these.
    std::size_t active_tick_count() const { return ticks_.empty() ? 0 : ticks_.size() - 1; }
    /// Ticks per second when the tick divides one second, else 0.
    int ticks_per_second() const;

    const SpatialIndex& index() const { return index_; }
    const std::vector<ObstaclePolygon>& obstacles() const { return index_.obstacles(); }
    Box bounds() const { return bounds_; }

    std::span<const NodeState> at_tick(std::size_t k) const { return ticks_.at(k); }

    /// All node ids that appear anywhere in the scenario, ascending.
    const std::vector<NodeId>& node_ids() const { return node_ids_; }
    /// Dense position of `id` in node_ids(); throws when absent.
    std::size_t dense_index(NodeId id) const;

    bool empty() const { return node_ids_.empty(); }

    /// Tick index for time t, or nothing when t is off the grid or outside [0, duration].
    std::optional<std::size_t> tick_of(double t) const;

    // Construction helpers: ticks must be appended in order.
    void set_tick(std::size_t k, std::vector<NodeState> nodes);
    void finalize();

private:
    Environment environment_ = Environment::highway;
    double tick_s_ = 0.1;
    double duration_s_ = 0.0;
    SpatialIndex index_;
    Box bounds_{};
    std::vector<std::vector<NodeState>> ticks_;
    std::vector<NodeId> node_ids_;
};

/// Immutable set of all node states at time t. Throws ConfigError when t is off the grid.
std::span<const NodeState> snapshot(const Scenario& scenario, double t);

struct TraceOptions {
    double tick_s = 0.1;
    /// When set, the x/y columns hold lon/lat degrees and are projected.
    std::optional<Projection> projection;
    /// Largest sample gap bridged by linear interpolation.
    double max_gap_s = 1.0;
};

/// One node's raw trace samples, time-ordered.
using TraceRows = std::vector<NodeState>;

/// Parses the trace CSV; rows grouped per node and checked for strictly increasing time.
std::vector<TraceRows> read_trace(const std::filesystem::path& path, const TraceOptions& options = {});

/// Resamples raw rows onto the tick grid. Gaps up to max_gap_s are interpolated
/// linearly; longer gaps leave the node absent in between.
Scenario assemble_scenario(Environment env, std::span<const TraceRows> nodes, std::vector<ObstaclePolygon> obstacles,
                           const TraceOptions& options, std::optional<double> duration_s = std::nullopt);

/// read_trace + assemble_scenario with no obstacles.
Scenario load_trace(const std::filesystem::path& path, const TraceOptions& options = {},
                    Environment env = Environment::highway);

void save_trace(const std::filesystem::path& path, const Scenario& scenario);

/// Fleet composition shared by the synthetic generators.
struct FleetConfig {
    double car_length_m = 4.5;
    double car_width_m = 1.8;
    double car_height_m = 1.5;
    /// Extra car body height drawn uniformly from [0, car_height_spread_m].
    double car_height_spread_m = 0.2;
    double tall_fraction = 0.2;
    double tall_length_m = 10.0;
    double tall_width_m = 2.5;
    double tall_height_m = 3.2;
    /// Antenna sits this far above the roof.
    double antenna_above_roof_m = 0.05;
};

struct HighwayConfig {
    double length_m = 12500.0;
    int lanes = 3;
    int vehicles = 404;
    double mean_speed_mps = 30.0;
    double lane_width_m = 3.5;
    double duration_s = 60.0;
    double tick_s = 0.1;
    FleetConfig fleet;
};

/// Straight multi-lane stretch; lanes alternate direction and wrap around at the ends.
Scenario gen_highway(const HighwayConfig& config, std::uint64_t seed);

struct UrbanConfig {
    int blocks_x = 10;
    int blocks_y = 10;
    double block_m = 80.0;
    double street_m = 20.0;
    int vehicles = 500;
    double mean_speed_mps = 10.0;
    /// Each building is inset into its block by a random setback in [0, max_setback_m].
    double max_setback_m = 0.0;
    double duration_s = 60.0;
    double tick_s = 0.1;
    FleetConfig fleet;
};

/// Manhattan grid: one building per block, vehicles on right-hand lanes turning
/// left, right, or straight at random at every intersection.
Scenario gen_urban_grid(const UrbanConfig& config, std::uint64_t seed);

/// Static roadside nodes replicated on every tick of `scenario`.
void add_static_nodes(Scenario& scenario, std::span<const NodeState> nodes);

/// Static-node file: trace schema with role=roadside, one row per node.
std::vector<NodeState> load_static_nodes(const std::filesystem::path& path,
                                         std::optional<Projection> projection = std::nullopt);

}  // namespace camsim
