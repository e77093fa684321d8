#include <doctest.h>

#include <cmath>

#include "camsim/error.hpp"
#include "camsim/metrics.hpp"
#include "camsim/rng.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace camsim;

namespace {

LinkSample sample(double t, NodeId tx, NodeId rx, double d, bool ok)
{
    LinkSample s;
    s.time_s = t;
    s.tx_id = tx;
    s.rx_id = rx;
    s.distance_m = d;
    s.received = ok;
    return s;
}

// Static nodes at fixed points; node ids 1..n.
Scenario static_scene(const std::vector<Point2D>& at, double duration)
{
    Scenario scn(Environment::urban, 0.1, duration, {});
    std::vector<NodeState> nodes;
    for (std::size_t i = 0; i < at.size(); ++i) {
        NodeState n;
        n.node_id = static_cast<NodeId>(i + 1);
        n.position = at[i];
        nodes.push_back(n);
    }
    for (std::size_t k = 0; k < scn.tick_count(); ++k) scn.set_tick(k, nodes);
    scn.finalize();
    return scn;
}

BinnedSeries series(std::vector<std::pair<double, double>> bins, Metric m = Metric::PDR)
{
    BinnedSeries s;
    s.metric = m;
    for (auto [c, v] : bins) {
        Bin b;
        b.center_m = c;
        b.mean = v;
        b.sample_count = 100;
        s.bins.push_back(b);
    }
    return s;
}

void check_same(const BinnedSeries& got, const std::vector<oracle::BinValue>& want)
{
    REQUIRE(got.bins.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        REQUIRE(got.bins[i].center_m == want[i].center_m);
        REQUIRE(got.bins[i].mean == want[i].mean);
        REQUIRE(got.bins[i].std == want[i].std);
        REQUIRE(got.bins[i].sample_count == want[i].n);
        REQUIRE(got.bins[i].excluded == want[i].excluded);
    }
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("bin geometry")
{
    CHECK(bin_index(0.0, 25) == 0);
    CHECK(bin_index(24.999, 25) == 0);
    CHECK(bin_index(25.0, 25) == 1);
    CHECK(bin_center(3, 50) == 175.0);
    const std::vector<double> v{0.4, 0.8};
    const auto [m, sd] = mean_std(v);
    CHECK(m == doctest::Approx(0.6));
    CHECK(sd == doctest::Approx(0.2));
}

TEST_CASE("PDR examples")
{
    std::vector<LinkSample> log;
    for (int i = 0; i < 10; ++i) log.push_back(sample(0.1 * i, 1, 2, 30, i < 7));
    const auto one = compute_pdr(log, 25, 1);
    REQUIRE(one.bins.size() == 1);
    CHECK(one.bins[0].center_m == 37.5);
    CHECK(one.bins[0].mean == doctest::Approx(0.7));
    CHECK(one.bins[0].sample_count == 10);
    CHECK(compute_pdr(log, 25, 40).bins[0].excluded);
    CHECK(compute_pdr(log, 25, 40).included().empty());

    std::vector<LinkSample> two;
    for (int i = 0; i < 10; ++i) two.push_back(sample(0.1 * i, 1, 3, 60, i < 4));
    for (int i = 0; i < 10; ++i) two.push_back(sample(0.1 * i, 2, 3, 60, i < 8));
    const auto agg = compute_pdr(two, 25, 1);
    CHECK(agg.bins[0].mean == doctest::Approx(0.6));
    CHECK(agg.bins[0].std == doctest::Approx(0.2));
    CHECK(agg.bins[0].nodes == std::vector<NodeId>{1, 2});

    std::vector<LinkSample> all;
    for (int i = 0; i < 100; ++i) all.push_back(sample(0.1 * i, 1 + i % 3, 4, 10.0 * i, true));
    for (const auto& b : compute_pdr(all, 25, 1).bins) CHECK(b.mean == 1.0);
}

TEST_CASE("NAR examples")
{
    // Receiver 1 with four neighbors between 60 and 90 m; it hears three of them.
    const auto scn = static_scene({{0, 0}, {60, 0}, {0, 70}, {-80, 0}, {0, -90}}, 1);
    std::vector<LinkSample> log{sample(0.0, 2, 1, 60, true), sample(0.1, 3, 1, 70, true),
                                sample(0.2, 4, 1, 80, true), sample(0.3, 5, 1, 90, false)};
    const auto nar = compute_nar(log, scn, 50, 1, 1);
    const auto* b = nar.find(75);
    REQUIRE(b != nullptr);
    REQUIRE(b->nodes.front() == 1);
    CHECK(b->per_node.front() == doctest::Approx(0.75));
    // Window 1 s with 1 s of run: nodes 2..5 hear nothing.
    CHECK(b->per_node[1] == 0.0);
}

TEST_CASE("NAR of i.i.d. success matches the closed form")
{
    // One receiver, 20 transmitters in one bin, 10 messages per window, success 0.3.
    std::vector<Point2D> at{{0, 0}};
    for (int i = 0; i < 20; ++i) at.push_back({20.0 + i, 0});
    const double duration = 200;
    const auto scn = static_scene(at, duration);
    std::vector<LinkSample> log;
    const auto key = rng::key(1, rng::Stream::test);
    std::uint64_t c = 0;
    for (int k = 0; k < static_cast<int>(duration * 10); ++k)
        for (NodeId tx = 2; tx <= 21; ++tx)
            log.push_back(sample(0.1 * k, tx, 1, 20.0 + tx - 2, rng::uniform(key, c++) <= 0.3));
    const auto nar = compute_nar(log, scn, 50, 1, 1);
    const auto* b = nar.find(25);
    REQUIRE(b != nullptr);
    CHECK(b->per_node.front() == doctest::Approx(1 - std::pow(0.7, 10)).epsilon(0.01));
}

TEST_CASE("perfect channel gives one everywhere")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto mc = oracle::micro_case(seed);
        for (auto& s : mc.log) s.received = true;
        for (const auto& b : compute_pdr(mc.log, 25, 0).bins) CHECK(b.mean == 1.0);
    }
    const auto scn = static_scene({{0, 0}, {100, 0}, {300, 0}}, 5);
    std::vector<LinkSample> log;
    for (int k = 0; k < 50; ++k)
        for (NodeId tx = 1; tx <= 3; ++tx)
            for (NodeId rx = 1; rx <= 3; ++rx)
                if (tx != rx) log.push_back(sample(0.1 * k, tx, rx, 0, true));
    for (const auto& b : compute_nar(log, scn, 50, 1, 0).bins) CHECK(b.mean == 1.0);
}

TEST_CASE("RNAR examples")
{
    std::vector<LinkSample> log{sample(0.0, 2, 1, 50, true), sample(0.1, 3, 1, 80, true),
                                sample(0.2, 4, 1, 120, true), sample(0.3, 5, 1, 250, true),
                                sample(0.4, 6, 1, 310, true), sample(0.5, 7, 1, 400, false)};
    const auto r = compute_rnar(log, 100, 1, 1.0);
    REQUIRE(r.windows.size() == 1);
    CHECK(r.windows[0].n == 5);
    CHECK(r.windows[0].na == 3);
    CHECK(compute_rnar(log, 200, 1).windows[0].ratio == doctest::Approx(0.4));
    CHECK(compute_rnar(log, 0, 1).windows[0].ratio == 1.0);
    CHECK(compute_rnar(log, 500, 1).windows[0].ratio == 0.0);
    // Profile starts at R = 0 and falls to zero past the farthest neighbor.
    REQUIRE(!r.profile.empty());
    CHECK(r.profile.front().r_m == 0.0);
    CHECK(r.profile.front().mean == 1.0);
    CHECK(r.profile.back().mean == 0.0);
    for (std::size_t i = 1; i < r.profile.size(); ++i) CHECK(r.profile[i].mean <= r.profile[i - 1].mean);
    // A window reaching past the run is dropped.
    CHECK(compute_rnar(log, 100, 1, 0.5).windows.empty());
}

TEST_CASE("range rules")
{
    const auto pdr = series({{12.5, 1.0}, {37.5, 0.95}, {62.5, 0.85}, {87.5, 0.2}});
    CHECK(effective_range(pdr).meters == 37.5);
    CHECK_FALSE(effective_range(pdr).flagged);
    CHECK(max_range(pdr).meters == 87.5);
    const auto good = series({{12.5, 1.0}, {37.5, 0.95}, {62.5, 0.92}});
    CHECK(effective_range(good).meters == 62.5);
    const auto zero = series({{12.5, 0.0}, {37.5, 0.0}});
    CHECK(effective_range(zero).meters == 0.0);
    CHECK(effective_range(zero).flagged);
    CHECK(max_range(zero).meters == 0.0);

    const auto nar = series({{25, 1.0}, {75, 0.91}, {125, 0.5}, {175, 0.95}}, Metric::NAR);
    CHECK(nar_threshold_distance(nar).meters == 75);
    CHECK(nar_threshold_distance(series({{25, 0.95}, {75, 0.9}}, Metric::NAR)).meters == 75);
    CHECK(nar_threshold_distance(series({{25, 0.5}}, Metric::NAR)).flagged);
    // Excluded bins are ignored.
    auto with_gap = pdr;
    with_gap.bins[2].excluded = true;
    CHECK(effective_range(with_gap).meters == 37.5);
    with_gap.bins[3].mean = 0.97;
    CHECK(effective_range(with_gap).meters == 87.5);
}

TEST_CASE("metrics equal the brute-force oracle")
{
    for (std::uint64_t seed = 100; seed < 125; ++seed) {
        const auto mc = oracle::micro_case(seed);
        INFO("seed " << seed);
        check_same(compute_pdr(mc.log, mc.pdr_bin_m, mc.min_samples), oracle::pdr(mc.log, mc.pdr_bin_m, mc.min_samples));
        check_same(compute_nar(mc.log, mc.scenario, mc.nar_bin_m, mc.window_s, mc.min_samples),
                   oracle::nar(mc.log, mc.scenario, mc.nar_bin_m, mc.window_s, mc.min_samples));
        const auto got = compute_rnar(mc.log, mc.rnar_r_m, mc.window_s, mc.scenario.duration_s());
        const auto want = oracle::rnar(mc.log, mc.rnar_r_m, mc.window_s, mc.scenario.duration_s());
        REQUIRE(got.windows.size() == want.windows.size());
        for (std::size_t i = 0; i < want.windows.size(); ++i) {
            REQUIRE(got.windows[i].rx == want.windows[i].rx);
            REQUIRE(got.windows[i].window == want.windows[i].window);
            REQUIRE(got.windows[i].na == want.windows[i].na);
            REQUIRE(got.windows[i].n == want.windows[i].n);
        }
        REQUIRE(got.profile.size() == want.profile.size());
        for (std::size_t i = 0; i < want.profile.size(); ++i) {
            REQUIRE(got.profile[i].r_m == want.profile[i].center_m);
            REQUIRE(got.profile[i].mean == want.profile[i].mean);
            REQUIRE(got.profile[i].std == want.profile[i].std);
            REQUIRE(got.profile[i].n == want.profile[i].n);
        }
    }
}

TEST_CASE("value ranges and count bounds")
{
    for (std::uint64_t seed = 200; seed < 210; ++seed) {
        const auto mc = oracle::micro_case(seed);
        for (const auto& b : compute_pdr(mc.log, 25, 0).bins) {
            CHECK(b.mean >= 0.0);
            CHECK(b.mean <= 1.0);
        }
        for (const auto& b : compute_nar(mc.log, mc.scenario, 50, 1, 0).bins)
            for (double v : b.per_node) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        for (const auto& w : compute_rnar(mc.log, 150, 1).windows) CHECK(w.na <= w.n);
    }
}

TEST_CASE("NAR does not drop with a longer window")
{
    std::vector<Point2D> at;
    for (int i = 0; i < 8; ++i) at.push_back({40.0 * i, 5.0 * i});
    const auto scn = static_scene(at, 20);
    std::vector<LinkSample> log;
    const auto key = rng::key(3, rng::Stream::test);
    std::uint64_t c = 0;
    for (int k = 0; k < 200; ++k)
        for (NodeId tx = 1; tx <= 8; ++tx)
            for (NodeId rx = 1; rx <= 8; ++rx)
                if (tx != rx) {
                    const double d = distance(at[tx - 1], at[rx - 1]);
                    log.push_back(sample(0.1 * k, tx, rx, d, rng::uniform(key, c++) < std::exp(-d / 100.0)));
                }
    const auto short_w = compute_nar(log, scn, 50, 1.0, 0);
    const auto long_w = compute_nar(log, scn, 50, 2.0, 0);
    for (const auto& b : short_w.bins) {
        const auto* l = long_w.find(b.center_m);
        REQUIRE(l != nullptr);
        CHECK(l->mean >= b.mean - 1e-12);
    }
}

TEST_CASE("equipped fraction lowers awareness of the whole fleet")
{
    std::vector<Point2D> at;
    for (int i = 0; i < 60; ++i) at.push_back({static_cast<double>(i % 10), static_cast<double>(i / 10)});
    const auto scn = static_scene(at, 2);
    std::vector<LinkSample> log;
    for (int k = 0; k < 20; ++k)
        for (NodeId tx = 1; tx <= 60; ++tx)
            for (NodeId rx = 1; rx <= 60; ++rx)
                if (tx != rx) log.push_back(sample(0.1 * k, tx, rx, distance(at[tx - 1], at[rx - 1]), true));
    const auto full = compute_nar(log, scn, 50, 1, 0);
    CHECK(full.bins.at(0).mean == 1.0);
    const auto half = compute_nar(log, scn, 50, 1, 0, std::numeric_limits<double>::infinity(), 0.5, 9);
    REQUIRE(half.bins.size() == 1);
    CHECK(half.bins[0].nodes.size() < 60);
    CHECK(half.bins[0].mean == doctest::Approx(0.5).epsilon(0.3));
    CHECK_THROWS_AS(compute_nar(log, scn, 50, 1, 0, 1e9, 1.5), ConfigError);
}

TEST_CASE("window starts must sit on the tick grid")
{
    const auto scn = static_scene({{0, 0}, {10, 0}}, 2);
    CHECK_THROWS_AS(compute_nar({}, scn, 50, 0.25, 0), ConfigError);
    CHECK_THROWS_AS(compute_nar({}, scn, 0, 1, 0), ConfigError);
}

TEST_CASE("burst and IRT statistics")
{
    // Alternating bursts: success runs of 5 then failure runs of 5.
    std::vector<LinkSample> log;
    for (int i = 0; i < 1000; ++i) log.push_back(sample(0.1 * i, 1, 2, 100, (i / 5) % 2 == 0));
    BurstAccumulator burst;
    burst.add(log);
    const auto b = burst.finish();
    CHECK(b.links == 1);
    CHECK(b.p_success == doctest::Approx(0.5).epsilon(0.01));
    CHECK(b.p_success_after_success == doctest::Approx(0.8).epsilon(0.01));

    IrtAccumulator irt;
    irt.add(log);
    const auto& h = irt.histogram();
    CHECK(h.at(1) == 400);  // four back-to-back gaps per run of five
    CHECK(h.at(6) == 99);   // across each failure run
}

TEST_CASE("series CSV round trip")
{
    testutil::TempDir dir;
    const auto mc = oracle::micro_case(7);
    const auto pdr = compute_pdr(mc.log, 25, 0);
    write_series_csv(dir / "pdr.csv", pdr);
    const auto back = read_series_csv(dir / "pdr.csv");
    REQUIRE(back.bins.size() == pdr.included().size());
    for (std::size_t i = 0; i < back.bins.size(); ++i) {
        CHECK(back.bins[i].center_m == pdr.bins[i].center_m);
        CHECK(std::abs(back.bins[i].mean - pdr.bins[i].mean) <= 5e-7);  // six decimals on disk
        CHECK(back.bins[i].sample_count == pdr.bins[i].sample_count);
    }
    CHECK(back.metric == Metric::PDR);
    CHECK(back.bin_width_m == 25.0);
    const std::vector<PlotCurve> curves{{"pdr.csv", "PDR", true}};
    write_series_plot(dir / "pdr.gp", curves, "PDR", "pdr.png");
    const auto gp = testutil::read_text(dir / "pdr.gp");
    CHECK(gp.find("pdr.csv") != std::string::npos);
    CHECK(gp.find("pdr.png") != std::string::npos);
}

}
