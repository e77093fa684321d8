#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "camsim/geometry.hpp"
#include "camsim/types.hpp"

namespace camsim {

enum class DistFamily : std::uint8_t { lognormal, gamma, normal_truncated };

std::string_view to_string(DistFamily family);
DistFamily parse_dist_family(std::string_view text);

/// Positive-support distribution for the per-second small-scale std-dev.
///
/// Parameters by family:
///   lognormal        a = median, b = sigma of log (0 gives a point mass at the median)
///   gamma            a = shape,  b = scale
///   normal_truncated a = mean,   b = std-dev of the parent normal, truncated to (0, inf)
struct DistributionSpec {
    DistFamily family = DistFamily::lognormal;
    double a = 1.0;
    double b = 0.0;
    /// Log-likelihood of the data a fitted spec came from; NaN when not fitted.
    double log_likelihood = std::numeric_limits<double>::quiet_NaN();

    static DistributionSpec lognormal(double median, double sigma_log) { return {DistFamily::lognormal, median, sigma_log}; }
    static DistributionSpec gamma(double shape, double scale) { return {DistFamily::gamma, shape, scale}; }
    static DistributionSpec normal_truncated(double mean, double sd) { return {DistFamily::normal_truncated, mean, sd}; }
    static DistributionSpec point(double value) { return lognormal(value, 0.0); }

    double mean() const;
    double variance() const;
    double log_pdf(double x) const;
    /// Deterministic draw from the counter-based stream `key`.
    double sample(std::uint64_t key) const;
};

void validate(const DistributionSpec& spec);

/// Maximum-likelihood fit. Needs at least 30 strictly positive samples.
DistributionSpec fit_distribution(std::span<const double> samples, DistFamily family);

enum class LosModel : std::uint8_t { two_ray, log_distance };

struct ChannelConfig {
    double frequency_hz = 5.9e9;
    double sensitivity_dbm = -95.0;
    LosModel los_model = LosModel::two_ray;
    /// Path-loss exponent of the log-distance LOS alternative.
    double los_exponent = 2.0;
    double nlosb_exponent = 2.0;
    /// Entry i applies to i+1 blocking vehicles; the last entry covers all larger counts.
    std::vector<double> per_vehicle_loss_db{6.0, 12.0, 18.0};
    double building_loss_db = 4.0;
    double foliage_loss_db = 2.0;
    double obstruction_cap_db = 40.0;
    DistributionSpec sigma_urban = DistributionSpec::lognormal(0.15, 0.4);
    DistributionSpec sigma_highway = DistributionSpec::lognormal(0.1, 0.4);
    double gain_vehicle_dbi = 0.0;
    double gain_roadside_dbi = 14.0;

    const DistributionSpec& sigma_dist(Environment env) const
    {
        return env == Environment::urban ? sigma_urban : sigma_highway;
    }
    double gain_dbi(Role role) const { return role == Role::roadside ? gain_roadside_dbi : gain_vehicle_dbi; }
    double wavelength_m() const;
};

void validate(const ChannelConfig& cfg);

nlohmann::json to_json(const ChannelConfig& cfg);
nlohmann::json to_json(const DistributionSpec& spec);
/// Missing keys keep their defaults; unknown keys are rejected.
ChannelConfig channel_config_from_json(const nlohmann::json& j);
DistributionSpec distribution_from_json(const nlohmann::json& j);

/// Friis free-space loss, distance clamped to 1 m.
double free_space_loss_db(double distance_m, double frequency_hz);

/// Ground-reflection two-ray loss (reflection coefficient -1). Free space up to the
/// crossover distance 4*pi*ht*hr/lambda, exact two-path field sum beyond it.
double two_ray_loss_db(double distance_m, double ht_m, double hr_m, double frequency_hz);

double large_scale_loss_db(LinkClass cls, double distance_m, const NodeState& tx, const NodeState& rx,
                           const Obstruction& obstruction, const ChannelConfig& cfg);

/// Order-independent identifier of the tx/rx pair.
constexpr std::uint64_t link_key(NodeId a, NodeId b)
{
    const auto lo = a < b ? a : b;
    const auto hi = a < b ? b : a;
    return (static_cast<std::uint64_t>(lo) << 32) | hi;
}

/// Small-scale std-dev for one link and one-second bin.
double draw_sigma(Environment env, std::uint64_t link, std::int64_t second_index, const ChannelConfig& cfg,
                  std::uint64_t seed);

/// Unit normal used for message `msg_index` on the directed link tx -> rx.
double message_gaussian(std::uint64_t seed, NodeId tx, NodeId rx, std::uint64_t msg_index);

struct LinkSample {
    double time_s = 0.0;
    NodeId tx_id = 0;
    NodeId rx_id = 0;
    double distance_m = 0.0;
    LinkClass link_class = LinkClass::LOS;
    double rx_power_dbm = 0.0;
    bool received = false;
};

/// Mean received power before the small-scale term.
double mean_rx_power_dbm(const NodeState& tx, const NodeState& rx, double tx_power_dbm, double loss_db,
                         const ChannelConfig& cfg);

LinkSample receive(const NodeState& tx, const NodeState& rx, double tx_power_dbm, const Obstruction& obstruction,
                   double sigma_db, const ChannelConfig& cfg, std::uint64_t seed, std::uint64_t msg_index);

}  // namespace camsim
