#pragma once

// Brute-force reference implementations of the metrics: quadratic scans over
// the raw log with no accumulators or indexes.

#include <cstdint>
#include <optional>
#include <vector>

#include "camsim/channel.hpp"
#include "camsim/mobility.hpp"

namespace oracle {

struct BinValue {
    double center_m = 0.0;
    double mean = 0.0;
    double std = 0.0;
    std::uint64_t n = 0;
    bool excluded = false;
};

std::vector<BinValue> pdr(const std::vector<camsim::LinkSample>& log, double width_m, std::uint64_t min_samples);

std::vector<BinValue> nar(const std::vector<camsim::LinkSample>& log, const camsim::Scenario& scn, double width_m,
                          double window_s, std::uint64_t min_samples);

struct RnarWindowValue {
    camsim::NodeId rx = 0;
    std::size_t window = 0;
    std::uint64_t na = 0;
    std::uint64_t n = 0;
};

struct RnarValue {
    std::vector<RnarWindowValue> windows;  // ordered by (window, rx)
    std::vector<BinValue> profile;         // center_m holds R
};

RnarValue rnar(const std::vector<camsim::LinkSample>& log, double r_m, double window_s, double duration_s);

/// Random scene of at most 10 nodes that come and go, with a log simulated on it.
struct MicroCase {
    camsim::Scenario scenario;
    std::vector<camsim::LinkSample> log;
    double pdr_bin_m = 25.0;
    double nar_bin_m = 50.0;
    double window_s = 1.0;
    std::uint64_t min_samples = 40;
    double rnar_r_m = 100.0;
};

MicroCase micro_case(std::uint64_t seed);

/// Population mean and std, summed in the given order.
std::pair<double, double> mean_std(const std::vector<double>& v);

}  // namespace oracle
