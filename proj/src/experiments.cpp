#include "camsim/experiments.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <fmt/format.h>

#include "camsim/csv.hpp"
#include "camsim/error.hpp"
#include "camsim/parallel.hpp"
#include "camsim/rng.hpp"

namespace camsim {

RunMetrics simulate_metrics(const Scenario& scenario, const BeaconConfig& beacon, const ChannelConfig& channel,
                            std::uint64_t seed, const MetricOptions& options, int workers)
{
    PdrAccumulator pdr(options.pdr_bin_m);
    PdrAccumulator pdr_coarse(options.nar_bin_m);
    const NeighborTruth truth(scenario, options.nar_bin_m, options.window_s, options.max_distance_m,
                              options.equipped_fraction, seed);
    NarAccumulator nar(truth, scenario);
    BurstAccumulator burst;
    RunMetrics out;
    out.stats = run(
        scenario, beacon, channel, seed,
        [&](std::span<const LinkSample> s) {
            pdr.add(s);
            pdr_coarse.add(s);
            nar.add(s);
            burst.add(s);
        },
        workers);
    out.pdr = pdr.finish(options.min_samples);
    out.pdr_nar_bins = pdr_coarse.finish(options.min_samples);
    out.nar = nar.finish(options.min_samples);
    out.burst = burst.finish();
    return out;
}

std::uint64_t cell_seed(std::uint64_t base_seed, double power_dbm, int rate_hz)
{
    return rng::key(base_seed, rng::Stream::sweep_cell, std::bit_cast<std::uint64_t>(power_dbm + 0.0),
                    static_cast<std::uint64_t>(rate_hz));
}

SweepSpec::SweepSpec()
{
    for (int p = 0; p <= 35; ++p) powers_dbm.push_back(p);
}

void validate(const SweepSpec& spec, int ticks_per_second)
{
    if (spec.powers_dbm.empty() || spec.rates_hz.empty() || spec.seeds.empty())
        throw ConfigError("sweep axes and seed list must be non-empty");
    for (double p : spec.powers_dbm)
        if (!std::isfinite(p)) throw ConfigError("sweep powers must be finite");
    for (int r : spec.rates_hz)
        if (r < 1 || r > ticks_per_second)
            throw ConfigError(fmt::format("sweep rate {} Hz not representable on a {} ticks/s grid", r, ticks_per_second));
    if (!(spec.nar_window_s > 0.0) || !(spec.bin_width_m > 0.0) || !(spec.max_distance_m > 0.0))
        throw ConfigError("sweep window, bin width and max distance must be > 0");
}

nlohmann::json to_json(const SweepSpec& spec)
{
    return {{"powers_dbm", spec.powers_dbm}, {"rates_hz", spec.rates_hz},     {"windows_s", spec.windows_s},
            {"nar_window_s", spec.nar_window_s}, {"bin_width_m", spec.bin_width_m}, {"min_samples", spec.min_samples},
            {"max_distance_m", spec.max_distance_m}, {"seeds", spec.seeds}};
}

SweepSpec sweep_spec_from_json(const nlohmann::json& j)
{
    SweepSpec spec;
    if (!j.is_object()) throw ConfigError("sweep spec must be a JSON object");
    try {
        for (const auto& [k, v] : j.items()) {
            if (k == "powers_dbm") {
                if (v.is_object()) {
                    spec.powers_dbm.clear();
                    const double from = v.at("from").get<double>(), to = v.at("to").get<double>(), step = v.at("step").get<double>();
                    if (!(step > 0.0) || to < from) throw ConfigError("powers_dbm range needs step > 0 and to >= from");
                    for (int i = 0; from + i * step <= to + 1e-9; ++i) spec.powers_dbm.push_back(from + i * step);
                } else {
                    spec.powers_dbm = v.get<std::vector<double>>();
                }
            } else if (k == "rates_hz") spec.rates_hz = v.get<std::vector<int>>();
            else if (k == "windows_s") spec.windows_s = v.get<std::vector<double>>();
            else if (k == "nar_window_s") spec.nar_window_s = v.get<double>();
            else if (k == "bin_width_m") spec.bin_width_m = v.get<double>();
            else if (k == "min_samples") spec.min_samples = v.get<std::uint64_t>();
            else if (k == "max_distance_m") spec.max_distance_m = v.get<double>();
            else if (k == "seeds") spec.seeds = v.get<std::vector<std::uint64_t>>();
            else throw ConfigError(fmt::format("unknown key '{}' in sweep spec", k));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("sweep spec: {}", e.what()));
    }
    return spec;
}

const SweepCell* Surface::cell(double power_dbm, int rate_hz) const
{
    for (const auto& c : cells)
        if (c.rate_hz == rate_hz && std::abs(c.power_dbm - power_dbm) < 1e-9) return &c;
    return nullptr;
}

std::vector<std::pair<double, double>> Surface::power_column(int rate_hz, double bin_center_m) const
{
    std::vector<std::pair<double, double>> out;
    for (const auto& c : cells) {
        if (c.rate_hz != rate_hz) continue;
        const Bin* b = c.nar.find(bin_center_m);
        if (b && !b->excluded) out.emplace_back(c.power_dbm, b->mean);
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

// Certain-outcome margin: |gaussian()| never exceeds rng::kGaussianBound.
constexpr double kCertainSigmas = 8.6;

struct CellState {
    double power;
    int rate;
    std::uint64_t seed;
    EmissionSchedule schedule;
    std::vector<double> node_power;
    std::vector<std::int64_t> msg;
    std::unique_ptr<NarAccumulator> nar;
    std::vector<double> sigma;
    std::vector<std::int64_t> sigma_second;
};

}  // namespace

Surface run_sweep(const Scenario& scenario, const SweepSpec& spec, const BeaconConfig& base_beacon,
                  const ChannelConfig& channel, int workers, const std::function<void(std::size_t, std::size_t)>& progress)
{
    if (scenario.empty()) throw ConfigError("scenario has no nodes");
    validate(spec, scenario.ticks_per_second());
    validate(channel);
    validate(base_beacon, scenario.ticks_per_second());

    const std::size_t n = scenario.node_ids().size();
    const auto T = static_cast<std::size_t>(scenario.ticks_per_second());
    const NeighborTruth truth(scenario, spec.bin_width_m, spec.nar_window_s, spec.max_distance_m);
    const std::size_t n_cells = spec.powers_dbm.size() * spec.rates_hz.size();
    const bool dense_cache = static_cast<double>(n) * static_cast<double>(n) * 16.0 * static_cast<double>(n_cells) <= 1.5e9;

    std::vector<std::unique_ptr<NarAccumulator>> pooled(n_cells);
    const std::size_t total_steps = spec.seeds.size() * scenario.active_tick_count();
    std::size_t step = 0;

    for (std::uint64_t base_seed : spec.seeds) {
        std::vector<CellState> cells;
        cells.reserve(n_cells);
        for (double p : spec.powers_dbm)
            for (int r : spec.rates_hz) {
                BeaconConfig b = base_beacon;
                b.rate_hz = r;
                b.tx_power_vehicle_dbm = p;
                b.tx_power_roadside_dbm = p;
                const std::uint64_t s = cell_seed(base_seed, p, r);
                CellState c{p, r, s, EmissionSchedule(scenario, b, s), std::vector<double>(n), {},
                            std::make_unique<NarAccumulator>(truth, scenario), {}, {}};
                for (std::size_t d = 0; d < n; ++d) {
                    c.node_power[d] = std::numeric_limits<double>::quiet_NaN();
                }
                if (dense_cache) {
                    c.sigma.assign(n * n, 0.0);
                    c.sigma_second.assign(n * n, -1);
                }
                cells.push_back(std::move(c));
            }

        std::vector<std::size_t> dense;
        std::vector<char> want;
        for (std::size_t k = 0; k < scenario.active_tick_count(); ++k, ++step) {
            if (progress) progress(step, total_steps);
            const auto nodes = scenario.at_tick(k);
            const auto window = truth.window_of(nodes.empty() ? 0.0 : nodes.front().time_s);
            if (!window) continue;
            const std::size_t m = nodes.size();
            dense.resize(m);
            want.assign(m, 0);
            for (std::size_t i = 0; i < m; ++i) dense[i] = scenario.dense_index(nodes[i].node_id);
            for (auto& c : cells) {
                c.msg.resize(m);
                for (std::size_t i = 0; i < m; ++i) {
                    c.msg[i] = c.schedule.emission_at(dense[i], k);
                    if (c.msg[i] >= 0) {
                        want[i] = 1;
                        if (std::isnan(c.node_power[dense[i]])) {
                            BeaconConfig b = base_beacon;
                            b.tx_power_vehicle_dbm = b.tx_power_roadside_dbm = c.power;
                            c.node_power[dense[i]] = effective_power(nodes[i], b, c.seed);
                        }
                    }
                }
            }
            const auto pairs = tick_geometry(nodes, scenario.index(), channel, base_beacon.candidate_radius_m, want, workers);
            const auto second = static_cast<std::int64_t>(k / T);
            const double sens = channel.sensitivity_dbm;

            parallel_chunks(cells.size(), workers, [&](std::size_t begin, std::size_t end, std::size_t) {
                for (std::size_t ci = begin; ci < end; ++ci) {
                    CellState& c = cells[ci];
                    for (const auto& g : pairs) {
                        const bool a_tx = c.msg[g.a] >= 0;
                        const bool b_tx = c.msg[g.b] >= 0;
                        if (!a_tx && !b_tx) continue;
                        const NodeState& na = nodes[g.a];
                        const NodeState& nb = nodes[g.b];
                        double sigma;
                        if (dense_cache) {
                            const std::size_t lo = std::min(dense[g.a], dense[g.b]);
                            const std::size_t hi = std::max(dense[g.a], dense[g.b]);
                            const std::size_t slot = lo * n + hi;
                            if (c.sigma_second[slot] != second) {
                                c.sigma[slot] = draw_sigma(scenario.environment(), link_key(na.node_id, nb.node_id),
                                                           second, channel, c.seed);
                                c.sigma_second[slot] = second;
                            }
                            sigma = c.sigma[slot];
                        } else {
                            sigma = draw_sigma(scenario.environment(), link_key(na.node_id, nb.node_id), second,
                                               channel, c.seed);
                        }
                        auto decide = [&](const NodeState& tx, const NodeState& rx, std::size_t tx_i) {
                            const double mean = mean_rx_power_dbm(tx, rx, c.node_power[dense[tx_i]], g.loss_db, channel);
                            if (sigma > 0.0) {
                                const double margin = mean - sens;
                                const double certain = kCertainSigmas * sigma + 1e-9;
                                if (margin > certain) return true;
                                if (margin < -certain) return false;
                                const double rxp = mean + sigma * message_gaussian(c.seed, tx.node_id, rx.node_id,
                                                                                   static_cast<std::uint64_t>(c.msg[tx_i]));
                                return rxp >= sens;
                            }
                            return mean >= sens;
                        };
                        if (a_tx && decide(na, nb, g.a)) c.nar->mark(*window, dense[g.b], dense[g.a]);
                        if (b_tx && decide(nb, na, g.b)) c.nar->mark(*window, dense[g.a], dense[g.b]);
                    }
                }
            });
        }
        for (std::size_t ci = 0; ci < n_cells; ++ci) {
            if (!pooled[ci]) pooled[ci] = std::move(cells[ci].nar);
            else pooled[ci]->merge(*cells[ci].nar);
        }
    }

    Surface surface;
    std::size_t ci = 0;
    for (double p : spec.powers_dbm)
        for (int r : spec.rates_hz) surface.cells.push_back({p, r, pooled[ci++]->finish(spec.min_samples)});
    return surface;
}

namespace {

std::string axis_label(double v) { return fmt::format("{}", v); }

void write_surface_plot(const std::filesystem::path& path, const std::string& csv_name, const std::string& x_label,
                        int x_column, const std::string& title)
{
    std::string out;
    out += "set terminal pngcairo size 1000,700 font ',11'\n";
    out += fmt::format("set output '{}.png'\n", std::filesystem::path(csv_name).stem().string());
    out += "set datafile separator ','\n";
    out += fmt::format("set title '{}'\n", title);
    out += fmt::format("set xlabel '{}'\nset ylabel 'Distance (m)'\nset zlabel 'NAR' rotate by 90\n", x_label);
    out += "set zrange [0:1]\nset ticslevel 0\nset dgrid3d 40,40 splines\nset pm3d\nset palette rgbformulae 33,13,10\n";
    out += fmt::format("splot '{0}' every ::1 using {1}:3:4 with pm3d title 'mean', \\\n"
                       "      '{0}' every ::1 using {1}:3:5 with lines lc rgb 'black' title 'std'\n",
                       csv_name, x_column);
    csv::write_atomic(path, out);
}

}  // namespace

std::vector<std::filesystem::path> write_surfaces(const std::filesystem::path& dir, const Surface& surface)
{
    std::filesystem::create_directories(dir);
    std::vector<double> powers;
    std::vector<int> rates;
    for (const auto& c : surface.cells) {
        if (std::find(powers.begin(), powers.end(), c.power_dbm) == powers.end()) powers.push_back(c.power_dbm);
        if (std::find(rates.begin(), rates.end(), c.rate_hz) == rates.end()) rates.push_back(c.rate_hz);
    }
    const std::string header = "power_dbm,rate_hz,bin_center_m,nar_mean,nar_std,n\n";
    auto rows = [](const SweepCell& c) {
        std::string out;
        for (const auto& b : c.nar.bins)
            if (!b.excluded)
                out += fmt::format("{},{},{},{:.6f},{:.6f},{}\n", c.power_dbm, c.rate_hz, b.center_m, b.mean, b.std,
                                   b.sample_count);
        return out;
    };
    std::vector<std::filesystem::path> written;
    for (int r : rates) {
        std::string out = header;
        for (double p : powers)
            if (const auto* c = surface.cell(p, r)) out += rows(*c);
        const std::string name = fmt::format("nar_surface_rate_{}hz.csv", r);
        csv::write_atomic(dir / name, out);
        write_surface_plot(dir / fmt::format("nar_surface_rate_{}hz.gp", r), name, "Tx power (dBm)", 1,
                           fmt::format("CAM rate fixed to {} Hz", r));
        written.push_back(dir / name);
    }
    for (double p : powers) {
        std::string out = header;
        for (int r : rates)
            if (const auto* c = surface.cell(p, r)) out += rows(*c);
        const std::string name = fmt::format("nar_surface_power_{}dbm.csv", axis_label(p));
        csv::write_atomic(dir / name, out);
        write_surface_plot(dir / fmt::format("nar_surface_power_{}dbm.gp", axis_label(p)), name, "CAM rate (Hz)", 2,
                           fmt::format("Tx power fixed to {} dBm", axis_label(p)));
        written.push_back(dir / name);
    }
    return written;
}

std::vector<WindowResult> window_sweep(std::span<const LinkSample> log, const Scenario& scenario,
                                       std::span<const double> windows_s, int rate_hz, double bin_width_m,
                                       std::uint64_t min_samples)
{
    if (rate_hz < 1) throw ConfigError("rate must be >= 1 Hz");
    std::vector<WindowResult> out;
    for (double w : windows_s) {
        WindowResult r;
        r.window_s = w;
        r.nar = compute_nar(log, scenario, bin_width_m, w, min_samples);
        r.flagged = w < 1.0 / rate_hz - 1e-9;
        out.push_back(std::move(r));
    }
    return out;
}

TransitionWidth transition_width(std::span<const std::pair<double, double>> column, double low, double high)
{
    TransitionWidth t;
    t.flagged = true;
    std::size_t hi = column.size();
    for (std::size_t i = 0; i < column.size(); ++i)
        if (column[i].second >= high) {
            hi = i;
            break;
        }
    if (hi == column.size()) return t;
    for (std::size_t i = hi; i-- > 0;)
        if (column[i].second <= low) {
            t.low_power_dbm = column[i].first;
            t.high_power_dbm = column[hi].first;
            t.width_db = t.high_power_dbm - t.low_power_dbm;
            t.flagged = false;
            return t;
        }
    return t;
}

EnvironmentReport compare_environments(const BinnedSeries& urban_nar, const BinnedSeries& highway_nar, double level)
{
    EnvironmentReport r;
    for (const auto& u : urban_nar.bins) {
        if (u.excluded) continue;
        const Bin* h = highway_nar.find(u.center_m);
        if (!h || h->excluded) continue;
        r.centers.push_back(u.center_m);
        r.difference.push_back(h->mean - u.mean);
    }
    r.urban_threshold = nar_threshold_distance(urban_nar, level);
    r.highway_threshold = nar_threshold_distance(highway_nar, level);
    r.highway_exceeds_urban = r.highway_threshold.meters > r.urban_threshold.meters;
    return r;
}

EnvironmentReport compare_environments(const Scenario& urban, const Scenario& highway, double power_dbm, int rate_hz,
                                       const BeaconConfig& beacon, const ChannelConfig& channel, std::uint64_t seed,
                                       const MetricOptions& options, int workers)
{
    BeaconConfig b = beacon;
    b.rate_hz = rate_hz;
    b.tx_power_vehicle_dbm = b.tx_power_roadside_dbm = power_dbm;
    const auto u = simulate_metrics(urban, b, channel, seed, options, workers);
    const auto h = simulate_metrics(highway, b, channel, seed, options, workers);
    return compare_environments(u.nar, h.nar);
}

nlohmann::json to_json(const EnvironmentReport& r)
{
    nlohmann::json bins = nlohmann::json::array();
    for (std::size_t i = 0; i < r.centers.size(); ++i)
        bins.push_back({{"bin_center_m", r.centers[i]}, {"highway_minus_urban", r.difference[i]}});
    return {{"urban_nar90_m", r.urban_threshold.meters},
            {"urban_nar90_flagged", r.urban_threshold.flagged},
            {"highway_nar90_m", r.highway_threshold.meters},
            {"highway_nar90_flagged", r.highway_threshold.flagged},
            {"highway_exceeds_urban", r.highway_exceeds_urban},
            {"bins", bins}};
}

}  // namespace camsim
