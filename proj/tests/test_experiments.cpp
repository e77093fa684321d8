#include <doctest.h>

#include <cmath>

#include "camsim/error.hpp"
#include "camsim/experiments.hpp"
#include "camsim/rng.hpp"
#include "test_util.hpp"

using namespace camsim;

namespace {

Scenario small_highway(double duration = 4.0, int vehicles = 40)
{
    HighwayConfig h;
    h.vehicles = vehicles;
    h.length_m = 2500;
    h.duration_s = duration;
    return gen_highway(h, 8);
}

Scenario static_scene(int n, double spacing, double duration)
{
    Scenario scn(Environment::highway, 0.1, duration, {});
    std::vector<NodeState> nodes;
    for (int i = 0; i < n; ++i) {
        NodeState s;
        s.node_id = static_cast<NodeId>(i + 1);
        s.position = {spacing * i, 0};
        nodes.push_back(s);
    }
    for (std::size_t k = 0; k < scn.tick_count(); ++k) scn.set_tick(k, nodes);
    scn.finalize();
    return scn;
}

void check_same(const BinnedSeries& a, const BinnedSeries& b)
{
    REQUIRE(a.bins.size() == b.bins.size());
    for (std::size_t i = 0; i < a.bins.size(); ++i) {
        REQUIRE(a.bins[i].center_m == b.bins[i].center_m);
        REQUIRE(a.bins[i].mean == b.bins[i].mean);
        REQUIRE(a.bins[i].std == b.bins[i].std);
        REQUIRE(a.bins[i].sample_count == b.bins[i].sample_count);
    }
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("sweep cells equal standalone runs")
{
    const auto scn = small_highway();
    SweepSpec spec;
    spec.powers_dbm = {0, 12};
    spec.rates_hz = {2, 10};
    spec.seeds = {5};
    const ChannelConfig channel;
    const BeaconConfig beacon;
    const auto surface = run_sweep(scn, spec, beacon, channel);
    REQUIRE(surface.cells.size() == 4);
    MetricOptions opts;
    opts.nar_bin_m = spec.bin_width_m;
    opts.window_s = spec.nar_window_s;
    opts.min_samples = spec.min_samples;
    opts.max_distance_m = spec.max_distance_m;
    for (double p : spec.powers_dbm)
        for (int r : spec.rates_hz) {
            BeaconConfig b = beacon;
            b.rate_hz = r;
            b.tx_power_vehicle_dbm = b.tx_power_roadside_dbm = p;
            const auto direct = simulate_metrics(scn, b, channel, cell_seed(5, p, r), opts);
            const auto* cell = surface.cell(p, r);
            REQUIRE(cell != nullptr);
            check_same(cell->nar, direct.nar);
        }
    // Degenerate 1x1 sweep.
    spec.powers_dbm = {12};
    spec.rates_hz = {10};
    const auto one = run_sweep(scn, spec, beacon, channel);
    check_same(one.cells.at(0).nar, surface.cell(12, 10)->nar);
}

TEST_CASE("sweep output files are reproducible and worker independent")
{
    const auto scn = small_highway(3);
    SweepSpec spec;
    spec.powers_dbm = {5, 15};
    spec.rates_hz = {1, 5};
    spec.seeds = {1, 2};
    testutil::TempDir a, b;
    const auto fa = write_surfaces(a.path(), run_sweep(scn, spec, BeaconConfig{}, ChannelConfig{}, 1));
    const auto fb = write_surfaces(b.path(), run_sweep(scn, spec, BeaconConfig{}, ChannelConfig{}, 3));
    REQUIRE(fa.size() == 4);
    for (const auto& f : fa) {
        const auto other = b.path() / f.filename();
        CHECK(testutil::read_text(f) == testutil::read_text(other));
    }
    const auto text = testutil::read_text(fa.front());
    CHECK(text.rfind("power_dbm,rate_hz,bin_center_m,nar_mean,nar_std,n", 0) == 0);
    for (const auto& f : fa) {
        auto gp = f;
        gp.replace_extension(".gp");
        CHECK(std::filesystem::exists(gp));
    }
}

TEST_CASE("seeds pool into the cells")
{
    const auto scn = small_highway(3);
    SweepSpec spec;
    spec.powers_dbm = {10};
    spec.rates_hz = {5};
    spec.seeds = {1};
    const auto one = run_sweep(scn, spec, BeaconConfig{}, ChannelConfig{});
    spec.seeds = {1, 2};
    const auto two = run_sweep(scn, spec, BeaconConfig{}, ChannelConfig{});
    for (const auto& b : two.cells[0].nar.bins) {
        const auto* o = one.cells[0].nar.find(b.center_m);
        if (o) CHECK(b.sample_count == 2 * o->sample_count);
    }
}

TEST_CASE("power columns rise with power")
{
    const auto scn = small_highway(5, 60);
    SweepSpec spec;
    spec.powers_dbm = {-10, -5, 0, 5, 10, 15, 20};
    spec.rates_hz = {10};
    const auto s = run_sweep(scn, spec, BeaconConfig{}, ChannelConfig{});
    for (double center : {125.0, 275.0, 475.0}) {
        const auto col = s.power_column(10, center);
        for (std::size_t i = 1; i < col.size(); ++i) CHECK(col[i].second >= col[i - 1].second - 0.02);
    }
}

TEST_CASE("sweep spec validation and JSON")
{
    SweepSpec spec;
    CHECK(spec.powers_dbm.size() == 36);
    CHECK(spec.rates_hz == std::vector<int>{1, 2, 3, 5, 10});
    const auto back = sweep_spec_from_json(to_json(spec));
    CHECK(to_json(back) == to_json(spec));
    CHECK_THROWS_AS(sweep_spec_from_json({{"powers", {1, 2}}}), ConfigError);
    spec.rates_hz = {20};
    CHECK_THROWS_AS(validate(spec, 10), ConfigError);
    spec.rates_hz = {};
    CHECK_THROWS_AS(validate(spec, 10), ConfigError);
    CHECK(cell_seed(1, 10, 5) != cell_seed(1, 10, 10));
    CHECK(cell_seed(1, 10, 5) != cell_seed(1, 11, 5));
    CHECK(cell_seed(1, 10, 5) != cell_seed(2, 10, 5));
}

TEST_CASE("window sweep")
{
    const auto scn = static_scene(6, 20, 30);
    std::vector<LinkSample> perfect, coin;
    const auto key = rng::key(2, rng::Stream::test);
    std::uint64_t c = 0;
    for (int k = 0; k < 300; ++k)
        for (NodeId tx = 1; tx <= 6; ++tx)
            for (NodeId rx = 1; rx <= 6; ++rx) {
                if (tx == rx) continue;
                LinkSample s;
                s.time_s = 0.1 * k;
                s.tx_id = tx;
                s.rx_id = rx;
                s.distance_m = 20.0 * std::abs(static_cast<double>(tx) - static_cast<double>(rx));
                s.received = true;
                perfect.push_back(s);
                s.received = rng::uniform(key, c++) <= 0.5;
                coin.push_back(s);
            }
    const std::vector<double> windows{0.1, 0.2, 0.5, 1.0, 2.0};
    for (const auto& w : window_sweep(perfect, scn, windows, 10, 50, 0))
        for (const auto& b : w.nar.bins) CHECK(b.mean == 1.0);

    const auto res = window_sweep(coin, scn, windows, 10, 200, 0);
    REQUIRE(res.size() == 5);
    CHECK(res[1].nar.bins.at(0).mean == doctest::Approx(0.75).epsilon(0.03));
    CHECK(res[3].nar.bins.at(0).mean == doctest::Approx(0.999).epsilon(0.01));
    for (std::size_t i = 1; i < res.size(); ++i)
        CHECK(res[i].nar.bins.at(0).mean >= res[i - 1].nar.bins.at(0).mean);
    for (const auto& r : res) CHECK_FALSE(r.flagged);
    CHECK(window_sweep(coin, scn, windows, 5, 200, 0)[0].flagged);
}

TEST_CASE("transition width")
{
    std::vector<std::pair<double, double>> step;
    for (int p = 0; p <= 30; ++p) step.push_back({p, p < 12 ? 0.0 : 1.0});
    auto t = transition_width(step);
    CHECK_FALSE(t.flagged);
    CHECK(t.width_db == 1.0);
    CHECK(t.low_power_dbm == 11.0);
    CHECK(t.high_power_dbm == 12.0);

    // Logistic with 0.2 at 10 dB and 0.9 at 20 dB.
    const double a = std::log(4.0), b = std::log(9.0);
    const double slope = (a + b) / 10.0;
    const double mid = 10.0 + a / slope;
    std::vector<std::pair<double, double>> logistic;
    for (int p = 0; p <= 35; ++p) logistic.push_back({p, 1.0 / (1.0 + std::exp(-slope * (p - mid)))});
    t = transition_width(logistic);
    CHECK(std::abs(t.width_db - 10.0) <= 1.0);

    std::vector<std::pair<double, double>> high_only{{0, 0.95}, {1, 0.99}};
    CHECK(transition_width(high_only).flagged);
    std::vector<std::pair<double, double>> low_only{{0, 0.0}, {1, 0.5}};
    CHECK(transition_width(low_only).flagged);
}

TEST_CASE("environment comparison")
{
    BinnedSeries s;
    for (int i = 0; i < 5; ++i) {
        Bin b;
        b.center_m = 25 + 50 * i;
        b.mean = 1.0 - 0.2 * i;
        b.sample_count = 100;
        s.bins.push_back(b);
    }
    const auto same = compare_environments(s, s);
    for (double d : same.difference) CHECK(d == 0.0);
    CHECK_FALSE(same.highway_exceeds_urban);
    auto better = s;
    for (auto& b : better.bins) b.mean = std::min(1.0, b.mean + 0.15);
    const auto r = compare_environments(s, better);
    CHECK(r.highway_exceeds_urban);
    CHECK(r.highway_threshold.meters > r.urban_threshold.meters);
    CHECK(to_json(r).at("highway_exceeds_urban") == true);
}

TEST_CASE("an obstacle-free urban clone of a highway scene behaves like the highway")
{
    const auto hw = small_highway(6, 60);
    Scenario clone(Environment::urban, hw.tick_s(), hw.duration_s(), {});
    for (std::size_t k = 0; k < hw.tick_count(); ++k)
        clone.set_tick(k, std::vector<NodeState>(hw.at_tick(k).begin(), hw.at_tick(k).end()));
    clone.finalize();
    MetricOptions opts;
    opts.min_samples = 40;
    const auto r = compare_environments(clone, hw, 5, 10, BeaconConfig{}, ChannelConfig{}, 3, opts);
    REQUIRE(!r.difference.empty());
    for (double d : r.difference) CHECK(std::abs(d) <= 0.05);
}

}
