#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "camsim/awareness_model.hpp"
#include "camsim/beaconing.hpp"
#include "camsim/metrics.hpp"

namespace camsim {

struct MetricOptions {
    double pdr_bin_m = 25.0;
    double nar_bin_m = 50.0;
    double window_s = 1.0;
    std::uint64_t min_samples = 40;
    double max_distance_m = std::numeric_limits<double>::infinity();
    double equipped_fraction = 1.0;
};

/// Metrics of one simulation computed on the fly, without keeping the log.
struct RunMetrics {
    RunStats stats;
    BinnedSeries pdr;
    /// PDR on the NAR bin grid, for model fitting.
    BinnedSeries pdr_nar_bins;
    BinnedSeries nar;
    BurstStats burst;
};

RunMetrics simulate_metrics(const Scenario& scenario, const BeaconConfig& beacon, const ChannelConfig& channel,
                            std::uint64_t seed, const MetricOptions& options = {}, int workers = 1);

/// Independent per-cell seed derived from the base seed and the cell coordinates.
std::uint64_t cell_seed(std::uint64_t base_seed, double power_dbm, int rate_hz);

struct SweepSpec {
    std::vector<double> powers_dbm;
    std::vector<int> rates_hz{1, 2, 3, 5, 10};
    std::vector<double> windows_s{0.1, 0.2, 0.5, 1.0, 2.0};
    double nar_window_s = 1.0;
    double bin_width_m = 50.0;
    std::uint64_t min_samples = 40;
    double max_distance_m = 1500.0;
    std::vector<std::uint64_t> seeds{1};

    SweepSpec();
};

void validate(const SweepSpec& spec, int ticks_per_second);
nlohmann::json to_json(const SweepSpec& spec);
SweepSpec sweep_spec_from_json(const nlohmann::json& j);

struct SweepCell {
    double power_dbm = 0.0;
    int rate_hz = 0;
    BinnedSeries nar;
};

struct Surface {
    std::vector<SweepCell> cells;  // power-major, then rate

    const SweepCell* cell(double power_dbm, int rate_hz) const;
    /// (power, NAR mean) pairs at a fixed rate and bin, ascending power; bins
    /// missing or excluded in a cell are skipped.
    std::vector<std::pair<double, double>> power_column(int rate_hz, double bin_center_m) const;
};

/// Runs every (power, rate) cell of the spec on one scenario. Geometry is
/// evaluated once per tick and shared by all cells; each cell draws its own
/// randomness from cell_seed(), so a cell equals a standalone run with that seed.
Surface run_sweep(const Scenario& scenario, const SweepSpec& spec, const BeaconConfig& base_beacon,
                  const ChannelConfig& channel, int workers = 1,
                  const std::function<void(std::size_t, std::size_t)>& progress = {});

/// Surface CSVs (`power_dbm,rate_hz,bin_center_m,nar_mean,nar_std,n`), one per
/// fixed rate and one per fixed power, plus matching gnuplot scripts.
std::vector<std::filesystem::path> write_surfaces(const std::filesystem::path& dir, const Surface& surface);

struct WindowResult {
    double window_s = 0.0;
    BinnedSeries nar;
    /// Window shorter than the beacon period.
    bool flagged = false;
};

std::vector<WindowResult> window_sweep(std::span<const LinkSample> log, const Scenario& scenario,
                                       std::span<const double> windows_s, int rate_hz, double bin_width_m = 50.0,
                                       std::uint64_t min_samples = 40);

struct TransitionWidth {
    double width_db = 0.0;
    double low_power_dbm = 0.0;
    double high_power_dbm = 0.0;
    /// Transition not bracketed by the column.
    bool flagged = false;
};

/// (smallest power with NAR >= high) - (largest power below it with NAR <= low).
TransitionWidth transition_width(std::span<const std::pair<double, double>> column, double low = 0.2,
                                 double high = 0.9);

struct EnvironmentReport {
    std::vector<double> centers;
    /// highway - urban per common bin.
    std::vector<double> difference;
    RangeResult urban_threshold;
    RangeResult highway_threshold;
    bool highway_exceeds_urban = false;
};

EnvironmentReport compare_environments(const BinnedSeries& urban_nar, const BinnedSeries& highway_nar,
                                       double level = 0.9);
EnvironmentReport compare_environments(const Scenario& urban, const Scenario& highway, double power_dbm, int rate_hz,
                                       const BeaconConfig& beacon, const ChannelConfig& channel, std::uint64_t seed,
                                       const MetricOptions& options = {}, int workers = 1);

nlohmann::json to_json(const EnvironmentReport& r);

}  // namespace camsim
