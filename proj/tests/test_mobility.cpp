#include <doctest.h>

#include <cmath>
#include <random>

#include "camsim/error.hpp"
#include "camsim/mobility.hpp"
#include "test_util.hpp"

using namespace camsim;

namespace {

const std::string kHeader =
    "time_s,node_id,x,y,speed_mps,heading_deg,length_m,width_m,body_height_m,antenna_height_m,role\n";

std::string row(double t, int id, double x, double y, const char* role = "vehicle", double speed = 10.0)
{
    return std::to_string(t) + "," + std::to_string(id) + "," + std::to_string(x) + "," + std::to_string(y) + "," +
           std::to_string(speed) + ",90,4.5,1.8,1.5,1.55," + role + "\n";
}

bool footprint_overlaps(const NodeState& n, const ObstaclePolygon& poly)
{
    const auto c = footprint_corners(n);
    for (int i = 0; i < 4; ++i)
        if (segment_intersects_polygon(c[static_cast<std::size_t>(i)], c[static_cast<std::size_t>((i + 1) % 4)], poly))
            return true;
    return point_in_polygon(poly.vertices[0], c);
}

}  // namespace

TEST_SUITE("mobility") {

TEST_CASE("generators are deterministic per seed")
{
    HighwayConfig h;
    h.vehicles = 30;
    h.length_m = 2000;
    h.duration_s = 3;
    testutil::TempDir dir;
    save_trace(dir / "a.csv", gen_highway(h, 5));
    save_trace(dir / "b.csv", gen_highway(h, 5));
    save_trace(dir / "c.csv", gen_highway(h, 6));
    CHECK(testutil::read_text(dir / "a.csv") == testutil::read_text(dir / "b.csv"));
    CHECK(testutil::read_text(dir / "a.csv") != testutil::read_text(dir / "c.csv"));

    UrbanConfig u;
    u.blocks_x = u.blocks_y = 3;
    u.vehicles = 20;
    u.duration_s = 3;
    save_trace(dir / "u1.csv", gen_urban_grid(u, 9));
    save_trace(dir / "u2.csv", gen_urban_grid(u, 9));
    CHECK(testutil::read_text(dir / "u1.csv") == testutil::read_text(dir / "u2.csv"));
}

TEST_CASE("highway layout")
{
    HighwayConfig h;
    h.vehicles = 100;
    h.length_m = 3000;
    h.duration_s = 5;
    const auto scn = gen_highway(h, 1);
    CHECK(scn.environment() == Environment::highway);
    CHECK(scn.tick_count() == 51);
    CHECK(scn.ticks_per_second() == 10);
    CHECK(scn.node_ids().size() == 100);
    for (std::size_t k = 0; k < scn.tick_count(); ++k) {
        const auto nodes = scn.at_tick(k);
        REQUIRE(nodes.size() == 100);
        for (const auto& n : nodes) {
            CHECK(n.position.x >= 0.0);
            CHECK(n.position.x < h.length_m);
            CHECK((n.heading_deg == 90.0 || n.heading_deg == 270.0));
            CHECK(n.time_s == doctest::Approx(0.1 * static_cast<double>(k)));
            CHECK(n.antenna_height_m == doctest::Approx(n.body_height_m + 0.05));
        }
    }
    // Vehicles in one lane never overlap at the start.
    auto nodes = std::vector<NodeState>(scn.at_tick(0).begin(), scn.at_tick(0).end());
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (std::size_t j = i + 1; j < nodes.size(); ++j) {
            if (nodes[i].position.y != nodes[j].position.y) continue;
            double dx = std::abs(nodes[i].position.x - nodes[j].position.x);
            dx = std::min(dx, h.length_m - dx);
            CHECK(dx >= 0.5 * (nodes[i].length_m + nodes[j].length_m) - 1e-6);
        }
}

TEST_CASE("fleet mix follows the tall fraction")
{
    HighwayConfig h;
    h.vehicles = 2000;
    h.length_m = 100000;
    h.duration_s = 0;
    h.fleet.tall_fraction = 0.0;
    const auto plain = gen_highway(h, 3);
    for (const auto& n : plain.at_tick(0)) CHECK(n.body_height_m < 3.0);
    h.fleet.tall_fraction = 0.25;
    const auto mixed = gen_highway(h, 3);
    int tall = 0;
    for (const auto& n : mixed.at_tick(0)) tall += n.body_height_m > 3.0 ? 1 : 0;
    CHECK(tall / 2000.0 == doctest::Approx(0.25).epsilon(0.12));
}

TEST_CASE("urban vehicles never overlap buildings")
{
    UrbanConfig u;
    u.blocks_x = u.blocks_y = 4;
    u.vehicles = 60;
    u.duration_s = 20;
    u.max_setback_m = 5;
    const auto scn = gen_urban_grid(u, 42);
    CHECK(scn.obstacles().size() == 16);
    for (std::size_t k = 0; k < scn.tick_count(); k += 3)
        for (const auto& n : scn.at_tick(k))
            for (const auto& b : scn.obstacles()) REQUIRE_FALSE(footprint_overlaps(n, b));
}

TEST_CASE("generator config errors")
{
    HighwayConfig h;
    h.vehicles = 0;
    CHECK_THROWS_AS(gen_highway(h, 1), ConfigError);
    h.vehicles = 1000;
    h.length_m = 100;
    CHECK_THROWS_AS(gen_highway(h, 1), ConfigError);
    UrbanConfig u;
    u.street_m = 3;
    CHECK_THROWS_AS(gen_urban_grid(u, 1), ConfigError);
    u = UrbanConfig{};
    u.blocks_x = u.blocks_y = 1;
    u.vehicles = 500;
    CHECK_THROWS_AS(gen_urban_grid(u, 1), ConfigError);
}

TEST_CASE("trace resampling interpolates on the segment")
{
    testutil::TempDir dir;
    testutil::write_text(dir / "t.csv", kHeader + row(0, 1, 0, 0) + row(1, 1, 10, 20) + row(0, 2, 5, 5) +
                                            row(0.5, 2, 6, 5) + row(3.0, 2, 9, 5));
    TraceOptions opts;
    const auto scn = load_trace(dir / "t.csv", opts);
    CHECK(scn.duration_s() == doctest::Approx(3.0));
    const auto s = snapshot(scn, 0.5);
    REQUIRE(s.size() == 2);
    CHECK(s[0].position.x == doctest::Approx(5.0));
    CHECK(s[0].position.y == doctest::Approx(10.0));
    CHECK(s[0].time_s == doctest::Approx(0.5));
    // Node 2 has a 2.5 s gap, longer than max_gap_s: absent inside it, present at both ends.
    CHECK(snapshot(scn, 1.5).size() == 0);
    CHECK(snapshot(scn, 3.0).size() == 1);
    CHECK_THROWS_AS(snapshot(scn, 0.55), ConfigError);

    opts.max_gap_s = 5.0;
    const auto wide = load_trace(dir / "t.csv", opts);
    const auto w = snapshot(wide, 1.5);
    REQUIRE(w.size() == 1);
    CHECK(w[0].position.x == doctest::Approx(7.2));
}

TEST_CASE("interpolated positions lie between bracketing samples")
{
    std::mt19937_64 g(5);
    std::uniform_real_distribution<double> pos(-500, 500), dt(0.05, 0.9);
    std::vector<TraceRows> nodes(5);
    for (NodeId id = 0; id < 5; ++id) {
        double t = 0.0;
        for (int i = 0; i < 20; ++i) {
            NodeState n;
            n.node_id = id + 1;
            n.time_s = t;
            n.position = {pos(g), pos(g)};
            nodes[id].push_back(n);
            t += dt(g);
        }
    }
    TraceOptions opts;
    const auto scn = assemble_scenario(Environment::highway, nodes, {}, opts);
    for (std::size_t k = 0; k < scn.tick_count(); ++k) {
        const double t = 0.1 * static_cast<double>(k);
        for (const auto& n : scn.at_tick(k)) {
            const auto& rows = nodes[n.node_id - 1];
            std::size_t j = 0;
            while (j + 1 < rows.size() && rows[j + 1].time_s <= t + 1e-9) ++j;
            if (std::abs(rows[j].time_s - t) < 1e-9) {
                CHECK(n.position == rows[j].position);
                continue;
            }
            REQUIRE(j + 1 < rows.size());
            const Point2D a = rows[j].position, b = rows[j + 1].position;
            const double len = distance(a, b);
            CHECK(distance(a, n.position) + distance(n.position, b) == doctest::Approx(len).epsilon(1e-9));
        }
    }
}

TEST_CASE("trace parse errors carry line numbers")
{
    testutil::TempDir dir;
    testutil::write_text(dir / "mono.csv", kHeader + row(0, 1, 0, 0) + row(1, 1, 1, 0) + row(1, 1, 2, 0));
    try {
        read_trace(dir / "mono.csv");
        FAIL("expected throw");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
    }
    testutil::write_text(dir / "fields.csv", kHeader + "0,1,2\n");
    CHECK_THROWS_AS(read_trace(dir / "fields.csv"), ParseError);
    testutil::write_text(dir / "hdr.csv", "t,id\n" + row(0, 1, 0, 0));
    CHECK_THROWS_AS(read_trace(dir / "hdr.csv"), ParseError);
    testutil::write_text(dir / "rsu.csv", kHeader + row(0, 1, 0, 0, "roadside", 3.0));
    CHECK_THROWS_AS(read_trace(dir / "rsu.csv"), ParseError);
    testutil::write_text(dir / "num.csv", kHeader + "0,1,abc,0,1,90,4.5,1.8,1.5,1.55,vehicle\n");
    CHECK_THROWS_AS(read_trace(dir / "num.csv"), ParseError);
}

TEST_CASE("static roadside nodes join every tick")
{
    testutil::TempDir dir;
    testutil::write_text(dir / "rsu.csv", kHeader + row(0, 900, 50, 50, "roadside", 0.0));
    HighwayConfig h;
    h.vehicles = 5;
    h.length_m = 500;
    h.duration_s = 1;
    auto scn = gen_highway(h, 1);
    add_static_nodes(scn, load_static_nodes(dir / "rsu.csv"));
    for (std::size_t k = 0; k < scn.tick_count(); ++k) {
        const auto nodes = scn.at_tick(k);
        REQUIRE(nodes.size() == 6);
        CHECK(nodes.back().node_id == 900);
        CHECK(nodes.back().role == Role::roadside);
    }
    CHECK(scn.dense_index(900) == 5);
    testutil::write_text(dir / "veh.csv", kHeader + row(0, 900, 50, 50));
    CHECK_THROWS_AS(load_static_nodes(dir / "veh.csv"), ParseError);
}

TEST_CASE("lon/lat traces are projected")
{
    testutil::TempDir dir;
    testutil::write_text(dir / "ll.csv", kHeader + row(0, 1, 7.0, 45.0) + row(1, 1, 7.0, 45.001));
    TraceOptions opts;
    opts.projection = Projection{45.0, 7.0};
    const auto scn = load_trace(dir / "ll.csv", opts);
    const auto s = snapshot(scn, 1.0);
    REQUIRE(s.size() == 1);
    CHECK(s[0].position.x == doctest::Approx(0.0));
    CHECK(s[0].position.y == doctest::Approx(111.195).epsilon(1e-3));
}

}
