#include <doctest.h>

#include <cmath>
#include <random>

#include "camsim/awareness_model.hpp"
#include "camsim/error.hpp"

using namespace camsim;

namespace {

std::vector<FitPair> synthetic(double z, double w = 1.0)
{
    std::vector<FitPair> pairs;
    for (int i = 1; i <= 19; ++i) {
        const double p = 0.05 * i;
        pairs.push_back({p, 1.0 - std::pow(1.0 - p, z), w});
    }
    return pairs;
}

BinnedSeries series(const std::vector<std::pair<double, double>>& bins, double width = 50.0)
{
    BinnedSeries s;
    s.bin_width_m = width;
    for (auto [c, v] : bins) {
        Bin b;
        b.center_m = c;
        b.mean = v;
        b.sample_count = 50;
        s.bins.push_back(b);
    }
    return s;
}

}  // namespace

TEST_SUITE("awareness_model") {

TEST_CASE("inter-reception time law")
{
    CHECK(irt_pmf(1.0, 1) == 1.0);
    CHECK(irt_pmf(0.5, 2) == 0.25);
    double total = 0.0;
    for (int k = 1; k <= 1000; ++k) total += irt_pmf(0.3, k);
    CHECK(std::abs(total - 1.0) < 1e-9);
    CHECK_THROWS_AS(irt_pmf(0.5, 0), ConfigError);
    CHECK_THROWS_AS(irt_pmf(1.5, 1), ConfigError);
}

TEST_CASE("cumulative and closed forms")
{
    CHECK(nar_sum(1.0, 7) == 1.0);
    CHECK(nar_sum(0.37, 1) == doctest::Approx(0.37));
    CHECK(nar_sum(0.5, 2) == 0.75);
    CHECK(nar_closed(0.0, 3.3) == 0.0);
    CHECK(nar_closed(0.3, 4.2768) == doctest::Approx(0.7824).epsilon(1e-3));
    double worst = 0.0;
    for (int n = 1; n <= 20; ++n)
        for (int i = 0; i <= 100; ++i) {
            const double p = 0.01 * i;
            worst = std::max(worst, std::abs(nar_sum(p, n) - nar_closed(p, n)));
        }
    CHECK(worst <= 1e-12);
}

TEST_CASE("closed form increases in pdr and Z")
{
    for (double z : {0.5, 1.0, 2.7, 8.0})
        for (int i = 0; i < 100; ++i) CHECK(nar_closed(0.01 * (i + 1), z) > nar_closed(0.01 * i, z));
    for (int i = 1; i < 100; ++i)
        for (double z = 0.5; z < 20; z += 0.5) {
            const double lo = nar_closed(0.01 * i, z), hi = nar_closed(0.01 * i, z + 0.5);
            CHECK(hi >= lo);
            if (lo < 1.0 - 1e-9) CHECK(hi > lo);  // strict until it rounds to 1
        }
}

TEST_CASE("fit recovers Z from exact pairs")
{
    for (double z : {2.0, 4.0, 8.0, 0.7, 13.3}) {
        const auto m = fit_z(synthetic(z));
        CHECK(m.z == doctest::Approx(z).epsilon(1e-3 / z));
        CHECK(m.fit_error < 1e-10);
        CHECK(m.n_bins == 19);
    }
    const std::vector<FitPair> same(3, FitPair{0.5, 0.75, 1.0});
    CHECK(fit_z(same).z == doctest::Approx(2.0).epsilon(5e-4));
}

TEST_CASE("fit is at least as good as every grid point")
{
    std::mt19937_64 g(12);
    std::uniform_real_distribution<double> p(0.02, 0.98), noise(-0.15, 0.15), w(0.1, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<FitPair> pairs;
        const double z = 0.5 + 12.0 * std::uniform_real_distribution<double>(0, 1)(g);
        for (int i = 0; i < 12; ++i) {
            const double x = p(g);
            pairs.push_back({x, std::clamp(nar_closed(x, z) + noise(g), 0.0, 1.0), w(g)});
        }
        const auto m = fit_z(pairs);
        const double best = fit_objective(pairs, m.z);
        CHECK(m.fit_error == doctest::Approx(best));
        for (int k = 5; k <= 200; ++k) REQUIRE(best <= fit_objective(pairs, 0.1 * k) + 1e-15);
    }
}

TEST_CASE("fit rejections")
{
    CHECK_THROWS_AS(fit_z(std::vector<FitPair>{{0.0, 0.0, 1}, {1.0, 1.0, 1}, {1.0, 1.0, 1}}), ConfigError);
    CHECK_THROWS_AS(fit_z(std::vector<FitPair>{{0.5, 0.7, 1}, {0.4, 0.6, 1}}), ConfigError);
    CHECK_THROWS_AS(fit_z(std::vector<FitPair>{{0.5, 1.7, 1}, {0.4, 0.6, 1}, {0.3, 0.5, 1}}), ConfigError);
    FitOptions bad;
    bad.z_min = 5;
    bad.z_max = 4;
    CHECK_THROWS_AS(fit_z(synthetic(3), bad), ConfigError);
}

TEST_CASE("a capped search interval")
{
    FitOptions opts;
    opts.z_max = 5.0;
    CHECK(fit_z(synthetic(9.0), opts).z == doctest::Approx(5.0).epsilon(1e-4));
}

TEST_CASE("bounds")
{
    const auto pdr = series({{25, 0.5}, {75, 1.0}, {125, 0.0}});
    const auto b = nar_bounds(pdr);
    CHECK(b.lower.bins[0].mean == 0.75);
    CHECK(b.upper.bins[0].mean == 0.99609375);
    CHECK(b.lower.bins[1].mean == 1.0);
    CHECK(b.upper.bins[1].mean == 1.0);
    CHECK(b.lower.bins[2].mean == 0.0);
    CHECK(b.upper.bins[2].mean == 0.0);
    const auto model = model_series(pdr, 3.0);
    CHECK(model.bins[0].mean == doctest::Approx(0.875));
}

TEST_CASE("pairs from series, with finer PDR bins merged")
{
    BinnedSeries pdr = series({{12.5, 1.0}, {37.5, 0.8}, {62.5, 0.6}, {87.5, 0.2}}, 25.0);
    pdr.bins[0].sample_count = 10;
    pdr.bins[1].sample_count = 30;
    const auto coarse = rebin(pdr, 50.0);
    REQUIRE(coarse.bins.size() == 2);
    CHECK(coarse.bins[0].center_m == 25.0);
    CHECK(coarse.bins[0].mean == doctest::Approx((10 * 1.0 + 30 * 0.8) / 40.0));
    CHECK(coarse.bins[0].sample_count == 40);
    CHECK(coarse.bins[1].mean == doctest::Approx(0.4));

    auto nar = series({{25, 0.9}, {75, 0.7}, {125, 0.3}});
    nar.bins[1].sample_count = 7;
    const auto pairs = fit_pairs(pdr, nar);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].nar == 0.9);
    CHECK(pairs[1].weight == 7.0);
    CHECK(fit_pairs(pdr, nar, "uniform")[1].weight == 1.0);
    CHECK_THROWS_AS(fit_pairs(pdr, nar, "squared"), ConfigError);
}

TEST_CASE("model validation")
{
    const auto a = series({{25, 0.9}, {75, 0.7}, {125, 0.3}});
    CHECK(validate_model(a, a).mean == 0.0);
    const auto shifted = series({{25, 0.85}, {75, 0.65}, {125, 0.25}});
    const auto r = validate_model(a, shifted);
    CHECK(r.mean == doctest::Approx(0.05));
    CHECK(r.standard_error == doctest::Approx(0.0).epsilon(1e-12));

    std::mt19937_64 g(4);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<std::pair<double, double>> x, y;
    for (int i = 0; i < 15; ++i) {
        x.push_back({25.0 + 50 * i, u(g)});
        y.push_back({25.0 + 50 * i, u(g)});
    }
    const auto rr = validate_model(series(x), series(y));
    double sum = 0.0;
    std::vector<double> d;
    for (int i = 0; i < 15; ++i) {
        d.push_back(std::abs(x[static_cast<std::size_t>(i)].second - y[static_cast<std::size_t>(i)].second));
        sum += d.back();
    }
    const double mean = sum / 15;
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    CHECK(rr.mean == doctest::Approx(mean));
    CHECK(rr.standard_error == doctest::Approx(std::sqrt(ss / 14) / std::sqrt(15.0)));
    CHECK(rr.abs_diff.size() == 15);

    CHECK_THROWS_AS(validate_model(a, series({{25, 0.9}, {75, 0.7}})), ConfigError);
    CHECK_THROWS_AS(validate_model(a, series({{25, 0.9}, {75, 0.7}, {175, 0.3}})), ConfigError);
}

TEST_CASE("model JSON")
{
    const auto m = fit_z(synthetic(4.0));
    const auto j = to_json(m);
    CHECK(j.at("Z").get<double>() == doctest::Approx(4.0).epsilon(1e-3));
    CHECK(j.contains("fit_error"));
    CHECK(j.at("n_bins").get<int>() == 19);
    CHECK(j.at("weights_mode") == "samples");
}

}
