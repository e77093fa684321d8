#pragma once

#include <cstdint>
#include <limits>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "camsim/channel.hpp"
#include "camsim/mobility.hpp"

namespace camsim {

enum class Metric : std::uint8_t { PDR, NAR, RNAR };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view text);

struct Bin {
    double center_m = 0.0;
    /// Per-node values and their sample counts, ascending node id.
    std::vector<NodeId> nodes;
    std::vector<double> per_node;
    std::vector<std::uint64_t> per_node_samples;
    double mean = 0.0;
    /// Population std-dev across nodes.
    double std = 0.0;
    std::uint64_t sample_count = 0;
    /// Set when sample_count < min_samples.
    bool excluded = false;
};

struct BinnedSeries {
    Metric metric = Metric::PDR;
    double bin_width_m = 25.0;
    double window_s = 0.0;
    std::uint64_t min_samples = 40;
    /// Populated bins only, ascending center.
    std::vector<Bin> bins;

    /// Bins that meet min_samples.
    std::vector<Bin> included() const;
    const Bin* find(double center_m) const;
};

std::size_t bin_index(double distance_m, double width_m);
double bin_center(std::size_t index, double width_m);

/// Mean and population std-dev.
std::pair<double, double> mean_std(std::span<const double> values);

/// PR/PT per transmitter and distance bin over the whole log.
class PdrAccumulator {
public:
    explicit PdrAccumulator(double bin_width_m = 25.0);
    void add(const LinkSample& s);
    void add(std::span<const LinkSample> samples)
    {
        for (const auto& s : samples) add(s);
    }
    BinnedSeries finish(std::uint64_t min_samples = 40) const;

private:
    double width_;
    std::unordered_map<std::uint64_t, std::pair<std::uint64_t, std::uint64_t>> counts_;  // (tx, bin) -> (PT, PR)
};

/// Ground-truth neighborhoods: for every complete window and every node present
/// at the window start, the other nodes within max_distance_m and their bins.
/// With equipped_fraction < 1 each node is equipped with that probability
/// (drawn per node from `seed`); unequipped nodes stay in the neighbor sets
/// but neither receive nor count as heard.
class NeighborTruth {
public:
    struct Entry {
        std::uint32_t neighbor;  // dense node index
        std::uint32_t bin;
    };

    NeighborTruth(const Scenario& scenario, double bin_width_m, double window_s,
                  double max_distance_m = std::numeric_limits<double>::infinity(), double equipped_fraction = 1.0,
                  std::uint64_t seed = 0);

    double bin_width_m() const { return width_; }
    double window_s() const { return window_s_; }
    std::size_t window_count() const { return receiver_start_.size(); }
    std::size_t node_count() const { return node_count_; }
    bool equipped(std::size_t dense) const { return equipped_.empty() || equipped_[dense]; }

    /// Dense indices of receivers present at the start of window w.
    std::span<const std::uint32_t> receivers(std::size_t w) const;
    std::span<const Entry> neighbors(std::size_t w, std::size_t receiver_slot) const;
    /// Window of a sample time, or nothing when outside the complete windows.
    std::optional<std::size_t> window_of(double t) const;

private:
    double width_;
    double window_s_;
    std::size_t node_count_ = 0;
    std::vector<char> equipped_;  // empty when every node is equipped
    std::vector<std::size_t> receiver_start_;  // per window, offset into receivers_
    std::vector<std::uint32_t> receivers_;
    std::vector<std::size_t> entry_start_;  // per receiver slot (global), offset into entries_
    std::vector<Entry> entries_;
};

/// ND/NT per receiver, window, and bin. Receptions must arrive in
/// non-decreasing window order.
class NarAccumulator {
public:
    NarAccumulator(const NeighborTruth& truth, const Scenario& scenario);

    void add(const LinkSample& s);
    void add(std::span<const LinkSample> samples)
    {
        for (const auto& s : samples) add(s);
    }
    /// Marks that rx heard tx during window w (dense indices).
    void mark(std::size_t w, std::size_t rx, std::size_t tx);
    /// Closes every remaining window; further marks are rejected.
    void close_all();
    /// Pools the per-node window ratios of another run over the same truth.
    void merge(NarAccumulator& other);
    BinnedSeries finish(std::uint64_t min_samples = 40);

private:
    void close_window();

    const NeighborTruth* truth_;
    const Scenario* scenario_;
    std::size_t n_;
    std::size_t current_ = 0;
    bool open_ = false;
    std::vector<char> heard_;
    std::vector<std::uint32_t> touched_;
    // per dense node: per bin (sum of ratios, windows)
    std::vector<std::vector<std::pair<double, std::uint64_t>>> per_node_;
    std::vector<std::uint64_t> nt_scratch_, nd_scratch_;
};

struct RnarWindow {
    NodeId rx = 0;
    std::size_t window = 0;
    std::uint64_t na = 0;
    std::uint64_t n = 0;
    double ratio = 0.0;
};

struct RnarPoint {
    double r_m = 0.0;
    double mean = 0.0;
    double std = 0.0;
    std::uint64_t n = 0;
};

struct RnarResult {
    double r_m = 0.0;
    double window_s = 1.0;
    std::vector<RnarWindow> windows;
    /// RNAR at R = 0, 50, 100, ... up to just past the farthest heard neighbor.
    std::vector<RnarPoint> profile;
};

/// Heard-neighbor distances per receiver and window; the distance of a neighbor
/// is that of its first received sample in the window.
class RnarAccumulator {
public:
    /// Windows ending after `duration_s` are dropped when it is given.
    explicit RnarAccumulator(double window_s = 1.0, std::optional<double> duration_s = std::nullopt);
    void add(const LinkSample& s);
    void add(std::span<const LinkSample> samples)
    {
        for (const auto& s : samples) add(s);
    }
    RnarResult finish(double r_m, double profile_step_m = 50.0) const;

private:
    double window_s_;
    std::optional<double> duration_s_;
    // (window, rx) -> tx -> (time, distance) of the earliest reception
    std::map<std::pair<std::size_t, NodeId>, std::unordered_map<NodeId, std::pair<double, double>>> heard_;
};

BinnedSeries compute_pdr(std::span<const LinkSample> log, double bin_width_m = 25.0, std::uint64_t min_samples = 40);
BinnedSeries compute_nar(std::span<const LinkSample> log, const Scenario& scenario, double bin_width_m = 50.0,
                         double window_s = 1.0, std::uint64_t min_samples = 40,
                         double max_distance_m = std::numeric_limits<double>::infinity(),
                         double equipped_fraction = 1.0, std::uint64_t seed = 0);
RnarResult compute_rnar(std::span<const LinkSample> log, double r_m, double window_s = 1.0,
                        std::optional<double> duration_s = std::nullopt);

struct RangeResult {
    double meters = 0.0;
    /// True when no bin meets the threshold.
    bool flagged = false;
};

/// Largest included bin center such that every included bin at or below it has mean >= threshold.
RangeResult effective_range(const BinnedSeries& pdr, double threshold = 0.9);
/// Largest included bin center with mean > 0.
RangeResult max_range(const BinnedSeries& pdr);
RangeResult nar_threshold_distance(const BinnedSeries& nar, double level = 0.9);

/// Success correlation of consecutive samples on each directed link, pooled
/// over links whose delivery ratio is strictly between 0 and 1.
struct BurstStats {
    double p_success = 0.0;
    double p_success_after_success = 0.0;
    std::uint64_t links = 0;
    std::uint64_t transitions = 0;
};

class BurstAccumulator {
public:
    void add(const LinkSample& s);
    void add(std::span<const LinkSample> samples)
    {
        for (const auto& s : samples) add(s);
    }
    BurstStats finish() const;

private:
    struct Link {
        std::uint64_t n = 0;
        std::uint64_t ok = 0;
        std::uint64_t ok_after = 0;   // s_t over samples with a predecessor
        std::uint64_t prev_ok = 0;    // s_{t-1}
        std::uint64_t both_ok = 0;    // s_{t-1} and s_t
        bool last = false;
    };
    std::unordered_map<std::uint64_t, Link> links_;
};

/// Inter-reception times on each directed link: the number of beacons from
/// one successful reception to the next (1 = back-to-back).
class IrtAccumulator {
public:
    void add(const LinkSample& s);
    void add(std::span<const LinkSample> samples)
    {
        for (const auto& s : samples) add(s);
    }
    /// k -> count.
    const std::map<std::uint64_t, std::uint64_t>& histogram() const { return hist_; }

private:
    struct Link {
        bool seen_success = false;
        std::uint64_t since = 0;
    };
    std::unordered_map<std::uint64_t, Link> links_;
    std::map<std::uint64_t, std::uint64_t> hist_;
};

/// `bin_center_m,mean,std,n` for included bins, preceded by a `#` metadata line.
void write_series_csv(const std::filesystem::path& path, const BinnedSeries& series);
BinnedSeries read_series_csv(const std::filesystem::path& path);
void write_rnar_csv(const std::filesystem::path& path, const RnarResult& result);

/// gnuplot script plotting one or more series CSVs with std-dev error bars.
struct PlotCurve {
    std::string csv_file;
    std::string title;
    bool error_bars = true;
};
void write_series_plot(const std::filesystem::path& path, std::span<const PlotCurve> curves, std::string_view ylabel,
                       std::string_view output_png);

}  // namespace camsim
