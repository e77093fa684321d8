#include "camsim/channel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <fmt/format.h>

#include "camsim/error.hpp"
#include "camsim/rng.hpp"

namespace camsim {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSpeedOfLight = 299792458.0;
const boost::math::normal_distribution<double> kUnitNormal;

double norm_cdf(double x) { return boost::math::cdf(kUnitNormal, x); }
double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

}  // namespace

std::string_view to_string(DistFamily family)
{
    switch (family) {
    case DistFamily::lognormal: return "lognormal";
    case DistFamily::gamma: return "gamma";
    case DistFamily::normal_truncated: return "normal_truncated";
    }
    return "?";
}

DistFamily parse_dist_family(std::string_view text)
{
    if (text == "lognormal") return DistFamily::lognormal;
    if (text == "gamma") return DistFamily::gamma;
    if (text == "normal_truncated") return DistFamily::normal_truncated;
    throw ConfigError(fmt::format("unknown distribution family '{}'", text));
}

double DistributionSpec::mean() const
{
    switch (family) {
    case DistFamily::lognormal: return a * std::exp(0.5 * b * b);
    case DistFamily::gamma: return a * b;
    case DistFamily::normal_truncated: {
        const double alpha = -a / b;
        const double lambda = norm_pdf(alpha) / (1.0 - norm_cdf(alpha));
        return a + b * lambda;
    }
    }
    return 0.0;
}

double DistributionSpec::variance() const
{
    switch (family) {
    case DistFamily::lognormal: return std::expm1(b * b) * a * a * std::exp(b * b);
    case DistFamily::gamma: return a * b * b;
    case DistFamily::normal_truncated: {
        const double alpha = -a / b;
        const double lambda = norm_pdf(alpha) / (1.0 - norm_cdf(alpha));
        return b * b * (1.0 + alpha * lambda - lambda * lambda);
    }
    }
    return 0.0;
}

double DistributionSpec::log_pdf(double x) const
{
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
    switch (family) {
    case DistFamily::lognormal: {
        if (b == 0.0) return x == a ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        const double z = (std::log(x) - std::log(a)) / b;
        return -0.5 * z * z - std::log(x * b * std::sqrt(2.0 * kPi));
    }
    case DistFamily::gamma:
        return (a - 1.0) * std::log(x) - x / b - std::lgamma(a) - a * std::log(b);
    case DistFamily::normal_truncated: {
        const double z = (x - a) / b;
        return -0.5 * z * z - std::log(b * std::sqrt(2.0 * kPi)) - std::log(1.0 - norm_cdf(-a / b));
    }
    }
    return 0.0;
}

double DistributionSpec::sample(std::uint64_t key) const
{
    switch (family) {
    case DistFamily::lognormal:
        if (b == 0.0) return a;
        return a * std::exp(b * rng::gaussian(key, 0));
    case DistFamily::gamma: {
        // Marsaglia-Tsang; shape < 1 uses the u^(1/k) boost.
        rng::CounterStream s(key);
        const double k = a < 1.0 ? a + 1.0 : a;
        const double d = k - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        double v = 0.0;
        for (;;) {
            double z = s.gaussian();
            v = 1.0 + c * z;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = s.uniform();
            if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) break;
        }
        double x = d * v * b;
        if (a < 1.0) x *= std::pow(s.uniform(), 1.0 / a);
        return x;
    }
    case DistFamily::normal_truncated: {
        const double lo = norm_cdf(-a / b);
        const double u = lo + (1.0 - lo) * (1.0 - rng::uniform(key, 0));
        const double p = std::clamp(u, lo + 1e-300, 1.0 - 1e-16);
        return std::max(a + b * boost::math::quantile(kUnitNormal, p), std::numeric_limits<double>::min());
    }
    }
    return 0.0;
}

void validate(const DistributionSpec& spec)
{
    const bool finite = std::isfinite(spec.a) && std::isfinite(spec.b);
    switch (spec.family) {
    case DistFamily::lognormal:
        if (!finite || spec.b < 0.0 || spec.a < 0.0 || (spec.a == 0.0 && spec.b > 0.0))
            throw ConfigError("lognormal needs median > 0 and sigma_log >= 0 (a point mass may sit at 0)");
        return;
    case DistFamily::gamma:
        if (!finite || !(spec.a > 0.0) || !(spec.b > 0.0)) throw ConfigError("gamma needs shape > 0 and scale > 0");
        return;
    case DistFamily::normal_truncated:
        if (!finite || !(spec.b > 0.0)) throw ConfigError("normal_truncated needs sd > 0");
        if (1.0 - norm_cdf(-spec.a / spec.b) < 1e-12) throw ConfigError("normal_truncated has no mass above 0");
        return;
    }
}

namespace {

double total_log_likelihood(const DistributionSpec& spec, std::span<const double> xs)
{
    double ll = 0.0;
    for (double x : xs) ll += spec.log_pdf(x);
    return ll;
}

/// Nelder-Mead on two parameters; enough for the truncated-normal likelihood.
std::array<double, 2> minimize2(const auto& f, std::array<double, 2> x0, std::array<double, 2> step)
{
    std::array<std::array<double, 2>, 3> p{x0, {x0[0] + step[0], x0[1]}, {x0[0], x0[1] + step[1]}};
    std::array<double, 3> v{f(p[0]), f(p[1]), f(p[2])};
    for (int iter = 0; iter < 2000; ++iter) {
        std::array<int, 3> o{0, 1, 2};
        std::sort(o.begin(), o.end(), [&](int i, int j) { return v[static_cast<std::size_t>(i)] < v[static_cast<std::size_t>(j)]; });
        const auto best = p[static_cast<std::size_t>(o[0])];
        const auto mid = p[static_cast<std::size_t>(o[1])];
        const auto worst = p[static_cast<std::size_t>(o[2])];
        const double fb = v[static_cast<std::size_t>(o[0])];
        const double fm = v[static_cast<std::size_t>(o[1])];
        const double fw = v[static_cast<std::size_t>(o[2])];
        if (std::abs(fw - fb) < 1e-12 * (1.0 + std::abs(fb)) &&
            std::hypot(worst[0] - best[0], worst[1] - best[1]) < 1e-10)
            break;
        const std::array<double, 2> c{0.5 * (best[0] + mid[0]), 0.5 * (best[1] + mid[1])};
        auto along = [&](double t) { return std::array<double, 2>{c[0] + t * (worst[0] - c[0]), c[1] + t * (worst[1] - c[1])}; };
        const auto r = along(-1.0);
        const double fr = f(r);
        std::array<double, 2> next = r;
        double fnext = fr;
        if (fr < fb) {
            const auto e = along(-2.0);
            const double fe = f(e);
            if (fe < fr) {
                next = e;
                fnext = fe;
            }
        } else if (fr >= fm) {
            const auto k = along(0.5);
            const double fk = f(k);
            if (fk < fw) {
                next = k;
                fnext = fk;
            } else {
                // Shrink toward the best vertex.
                p = {best, {0.5 * (best[0] + mid[0]), 0.5 * (best[1] + mid[1])},
                     {0.5 * (best[0] + worst[0]), 0.5 * (best[1] + worst[1])}};
                v = {fb, f(p[1]), f(p[2])};
                continue;
            }
        }
        p = {best, mid, next};
        v = {fb, fm, fnext};
    }
    const auto it = std::min_element(v.begin(), v.end());
    return p[static_cast<std::size_t>(it - v.begin())];
}

}  // namespace

DistributionSpec fit_distribution(std::span<const double> samples, DistFamily family)
{
    if (samples.size() < 30) throw ConfigError(fmt::format("need at least 30 samples to fit, got {}", samples.size()));
    for (double x : samples)
        if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError("samples must be finite and > 0");
    const double n = static_cast<double>(samples.size());
    double sum = 0.0, sum_log = 0.0;
    for (double x : samples) {
        sum += x;
        sum_log += std::log(x);
    }
    const double mean = sum / n;
    const double mean_log = sum_log / n;

    DistributionSpec spec;
    switch (family) {
    case DistFamily::lognormal: {
        double ss = 0.0;
        for (double x : samples) ss += (std::log(x) - mean_log) * (std::log(x) - mean_log);
        spec = DistributionSpec::lognormal(std::exp(mean_log), std::sqrt(ss / n));
        break;
    }
    case DistFamily::gamma: {
        const double s = std::log(mean) - mean_log;
        double k = 1e8;
        if (s > 1e-12) {
            k = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
            for (int i = 0; i < 100; ++i) {
                const double f = std::log(k) - boost::math::digamma(k) - s;
                const double df = 1.0 / k - boost::math::trigamma(k);
                const double next = std::max(k - f / df, 0.5 * k);
                if (std::abs(next - k) < 1e-12 * k) {
                    k = next;
                    break;
                }
                k = next;
            }
        }
        spec = DistributionSpec::gamma(k, mean / k);
        break;
    }
    case DistFamily::normal_truncated: {
        double ss = 0.0;
        for (double x : samples) ss += (x - mean) * (x - mean);
        const double sd0 = std::max(std::sqrt(ss / n), 1e-6 * mean);
        auto nll = [&](const std::array<double, 2>& q) {
            const auto cand = DistributionSpec::normal_truncated(q[0], std::exp(q[1]));
            if (1.0 - norm_cdf(-cand.a / cand.b) < 1e-300) return std::numeric_limits<double>::infinity();
            return -total_log_likelihood(cand, samples);
        };
        const auto q = minimize2(nll, {mean, std::log(sd0)}, {0.1 * sd0, 0.1});
        spec = DistributionSpec::normal_truncated(q[0], std::exp(q[1]));
        break;
    }
    }
    spec.log_likelihood = total_log_likelihood(spec, samples);
    return spec;
}

// ---------------------------------------------------------------------------
// Configuration

double ChannelConfig::wavelength_m() const { return kSpeedOfLight / frequency_hz; }

void validate(const ChannelConfig& cfg)
{
    if (!(cfg.frequency_hz > 0.0) || !std::isfinite(cfg.frequency_hz)) throw ConfigError("frequency_hz must be > 0");
    if (!std::isfinite(cfg.sensitivity_dbm)) throw ConfigError("sensitivity_dbm must be finite");
    if (!(cfg.nlosb_exponent >= 2.0) || !(cfg.los_exponent >= 2.0)) throw ConfigError("path-loss exponents must be >= 2");
    if (cfg.per_vehicle_loss_db.empty()) throw ConfigError("per_vehicle_loss_db must not be empty");
    for (std::size_t i = 0; i < cfg.per_vehicle_loss_db.size(); ++i) {
        if (!std::isfinite(cfg.per_vehicle_loss_db[i]) || cfg.per_vehicle_loss_db[i] < 0.0)
            throw ConfigError("per_vehicle_loss_db entries must be >= 0");
        if (i > 0 && cfg.per_vehicle_loss_db[i] < cfg.per_vehicle_loss_db[i - 1])
            throw ConfigError("per_vehicle_loss_db must be non-decreasing");
    }
    if (!(cfg.building_loss_db >= 0.0) || !(cfg.foliage_loss_db >= 0.0) || !(cfg.obstruction_cap_db >= 0.0))
        throw ConfigError("obstruction losses must be >= 0");
    if (!std::isfinite(cfg.gain_vehicle_dbi) || !std::isfinite(cfg.gain_roadside_dbi))
        throw ConfigError("antenna gains must be finite");
    validate(cfg.sigma_urban);
    validate(cfg.sigma_highway);
}

nlohmann::json to_json(const DistributionSpec& spec)
{
    switch (spec.family) {
    case DistFamily::lognormal: return {{"family", "lognormal"}, {"median_db", spec.a}, {"sigma_log", spec.b}};
    case DistFamily::gamma: return {{"family", "gamma"}, {"shape", spec.a}, {"scale_db", spec.b}};
    case DistFamily::normal_truncated: return {{"family", "normal_truncated"}, {"mean_db", spec.a}, {"sd_db", spec.b}};
    }
    return {};
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known, std::string_view where)
{
    if (!j.is_object()) throw ConfigError(fmt::format("{} must be a JSON object", where));
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw ConfigError(fmt::format("unknown key '{}' in {}", k, where));
}

double num(const nlohmann::json& j, const char* k)
{
    const auto& v = j.at(k);
    if (!v.is_number()) throw ConfigError(fmt::format("'{}' must be a number", k));
    return v.get<double>();
}

}  // namespace

DistributionSpec distribution_from_json(const nlohmann::json& j)
{
    try {
        const auto family = j.at("family").get<std::string>();
        DistributionSpec spec;
        if (family == "point") {
            reject_unknown(j, {"family", "value_db"}, "distribution");
            spec = DistributionSpec::point(num(j, "value_db"));
        } else if (family == "lognormal") {
            reject_unknown(j, {"family", "median_db", "sigma_log"}, "distribution");
            spec = DistributionSpec::lognormal(num(j, "median_db"), num(j, "sigma_log"));
        } else if (family == "gamma") {
            reject_unknown(j, {"family", "shape", "scale_db"}, "distribution");
            spec = DistributionSpec::gamma(num(j, "shape"), num(j, "scale_db"));
        } else if (family == "normal_truncated") {
            reject_unknown(j, {"family", "mean_db", "sd_db"}, "distribution");
            spec = DistributionSpec::normal_truncated(num(j, "mean_db"), num(j, "sd_db"));
        } else {
            throw ConfigError(fmt::format("unknown distribution family '{}'", family));
        }
        validate(spec);
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("distribution: {}", e.what()));
    }
}

nlohmann::json to_json(const ChannelConfig& cfg)
{
    return {
        {"frequency_hz", cfg.frequency_hz},
        {"sensitivity_dbm", cfg.sensitivity_dbm},
        {"los_model", cfg.los_model == LosModel::two_ray ? "two_ray" : "log_distance"},
        {"los_exponent", cfg.los_exponent},
        {"nlosb_exponent", cfg.nlosb_exponent},
        {"per_vehicle_loss_db", cfg.per_vehicle_loss_db},
        {"building_loss_db", cfg.building_loss_db},
        {"foliage_loss_db", cfg.foliage_loss_db},
        {"obstruction_cap_db", cfg.obstruction_cap_db},
        {"antenna_gain_dbi", {{"vehicle", cfg.gain_vehicle_dbi}, {"roadside", cfg.gain_roadside_dbi}}},
        {"smallscale_sigma_dist", {{"urban", to_json(cfg.sigma_urban)}, {"highway", to_json(cfg.sigma_highway)}}},
    };
}

ChannelConfig channel_config_from_json(const nlohmann::json& j)
{
    ChannelConfig cfg;
    try {
        reject_unknown(j,
                       {"frequency_hz", "sensitivity_dbm", "los_model", "los_exponent", "nlosb_exponent",
                        "per_vehicle_loss_db", "building_loss_db", "foliage_loss_db", "obstruction_cap_db",
                        "antenna_gain_dbi", "smallscale_sigma_dist"},
                       "channel config");
        if (j.contains("frequency_hz")) cfg.frequency_hz = num(j, "frequency_hz");
        if (j.contains("sensitivity_dbm")) cfg.sensitivity_dbm = num(j, "sensitivity_dbm");
        if (j.contains("los_model")) {
            const auto m = j.at("los_model").get<std::string>();
            if (m == "two_ray") cfg.los_model = LosModel::two_ray;
            else if (m == "log_distance") cfg.los_model = LosModel::log_distance;
            else throw ConfigError(fmt::format("unknown los_model '{}'", m));
        }
        if (j.contains("los_exponent")) cfg.los_exponent = num(j, "los_exponent");
        if (j.contains("nlosb_exponent")) cfg.nlosb_exponent = num(j, "nlosb_exponent");
        if (j.contains("per_vehicle_loss_db")) cfg.per_vehicle_loss_db = j.at("per_vehicle_loss_db").get<std::vector<double>>();
        if (j.contains("building_loss_db")) cfg.building_loss_db = num(j, "building_loss_db");
        if (j.contains("foliage_loss_db")) cfg.foliage_loss_db = num(j, "foliage_loss_db");
        if (j.contains("obstruction_cap_db")) cfg.obstruction_cap_db = num(j, "obstruction_cap_db");
        if (j.contains("antenna_gain_dbi")) {
            const auto& g = j.at("antenna_gain_dbi");
            reject_unknown(g, {"vehicle", "roadside"}, "antenna_gain_dbi");
            if (g.contains("vehicle")) cfg.gain_vehicle_dbi = num(g, "vehicle");
            if (g.contains("roadside")) cfg.gain_roadside_dbi = num(g, "roadside");
        }
        if (j.contains("smallscale_sigma_dist")) {
            const auto& s = j.at("smallscale_sigma_dist");
            reject_unknown(s, {"urban", "highway"}, "smallscale_sigma_dist");
            if (s.contains("urban")) cfg.sigma_urban = distribution_from_json(s.at("urban"));
            if (s.contains("highway")) cfg.sigma_highway = distribution_from_json(s.at("highway"));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("channel config: {}", e.what()));
    }
    validate(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------
// Path loss

double free_space_loss_db(double distance_m, double frequency_hz)
{
    const double d = std::max(distance_m, 1.0);
    const double lambda = kSpeedOfLight / frequency_hz;
    return 20.0 * std::log10(4.0 * kPi * d / lambda);
}

double two_ray_loss_db(double distance_m, double ht_m, double hr_m, double frequency_hz)
{
    const double d = std::max(distance_m, 1.0);
    const double lambda = kSpeedOfLight / frequency_hz;
    const double crossover = 4.0 * kPi * ht_m * hr_m / lambda;
    if (d <= crossover) return free_space_loss_db(d, frequency_hz);
    const double dh = ht_m - hr_m;
    const double sh = ht_m + hr_m;
    const double d_los = std::sqrt(d * d + dh * dh);
    const double d_ref = std::sqrt(d * d + sh * sh);
    // Path difference without cancellation: (d_ref^2 - d_los^2) / (d_ref + d_los).
    const double delta = 4.0 * ht_m * hr_m / (d_ref + d_los);
    const double phase = 2.0 * kPi * delta / lambda;
    const std::complex<double> field = 1.0 / d_los - std::polar(1.0 / d_ref, -phase);
    const double gain = lambda / (4.0 * kPi) * std::abs(field);
    return -20.0 * std::log10(gain);
}

double large_scale_loss_db(LinkClass cls, double distance_m, const NodeState& tx, const NodeState& rx,
                           const Obstruction& obstruction, const ChannelConfig& cfg)
{
    const double d = std::max(distance_m, 1.0);
    const double los = cfg.los_model == LosModel::two_ray
                           ? two_ray_loss_db(d, tx.antenna_height_m, rx.antenna_height_m, cfg.frequency_hz)
                           : free_space_loss_db(1.0, cfg.frequency_hz) + 10.0 * cfg.los_exponent * std::log10(d);
    switch (cls) {
    case LinkClass::LOS: return los;
    case LinkClass::NLOSv: {
        if (obstruction.vehicles <= 0) return los;
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(obstruction.vehicles), cfg.per_vehicle_loss_db.size());
        return los + cfg.per_vehicle_loss_db[n - 1];
    }
    case LinkClass::NLOSb: {
        const double surcharge = std::min(cfg.obstruction_cap_db, obstruction.buildings * cfg.building_loss_db +
                                                                      obstruction.foliage * cfg.foliage_loss_db);
        const double nlos = free_space_loss_db(1.0, cfg.frequency_hz) + 10.0 * cfg.nlosb_exponent * std::log10(d) + surcharge;
        // Never weaker than the same link behind one vehicle.
        return std::max(nlos, los + cfg.per_vehicle_loss_db.front());
    }
    }
    return los;
}

double draw_sigma(Environment env, std::uint64_t link, std::int64_t second_index, const ChannelConfig& cfg,
                  std::uint64_t seed)
{
    const std::uint64_t k = rng::key(seed, rng::Stream::sigma, link, static_cast<std::uint64_t>(second_index),
                                     static_cast<std::uint64_t>(env));
    return cfg.sigma_dist(env).sample(k);
}

double message_gaussian(std::uint64_t seed, NodeId tx, NodeId rx, std::uint64_t msg_index)
{
    return rng::gaussian(rng::key(seed, rng::Stream::message, tx, rx, msg_index), 0);
}

double mean_rx_power_dbm(const NodeState& tx, const NodeState& rx, double tx_power_dbm, double loss_db,
                         const ChannelConfig& cfg)
{
    return tx_power_dbm + cfg.gain_dbi(tx.role) + cfg.gain_dbi(rx.role) - loss_db;
}

LinkSample receive(const NodeState& tx, const NodeState& rx, double tx_power_dbm, const Obstruction& obstruction,
                   double sigma_db, const ChannelConfig& cfg, std::uint64_t seed, std::uint64_t msg_index)
{
    LinkSample s;
    s.time_s = tx.time_s;
    s.tx_id = tx.node_id;
    s.rx_id = rx.node_id;
    s.distance_m = distance(tx.position, rx.position);
    s.link_class = obstruction.link_class;
    const double loss = large_scale_loss_db(obstruction.link_class, s.distance_m, tx, rx, obstruction, cfg);
    s.rx_power_dbm = mean_rx_power_dbm(tx, rx, tx_power_dbm, loss, cfg);
    if (sigma_db > 0.0) s.rx_power_dbm += sigma_db * message_gaussian(seed, tx.node_id, rx.node_id, msg_index);
    s.received = s.rx_power_dbm >= cfg.sensitivity_dbm;
    return s;
}

}  // namespace camsim
