#include <doctest.h>

#include <cmath>
#include <set>

#include "camsim/rng.hpp"

using namespace camsim;

TEST_SUITE("rng") {

TEST_CASE("keys separate streams and coordinates")
{
    std::set<std::uint64_t> seen;
    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL})
        for (auto s : {rng::Stream::message, rng::Stream::sigma, rng::Stream::placement})
            for (std::uint64_t a = 0; a < 10; ++a)
                for (std::uint64_t b = 0; b < 10; ++b) seen.insert(rng::key(seed, s, a, b));
    CHECK(seen.size() == 3 * 3 * 10 * 10);
    CHECK(rng::key(5, rng::Stream::test, 1, 2) != rng::key(5, rng::Stream::test, 2, 1));
}

TEST_CASE("uniform stays in (0, 1] with the right moments")
{
    const auto k = rng::key(7, rng::Stream::test);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng::uniform(k, static_cast<std::uint64_t>(i));
        REQUIRE(u > 0.0);
        REQUIRE(u <= 1.0);
        sum += u;
        sq += u * u;
    }
    const double mean = sum / n;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
    CHECK(sq / n - mean * mean == doctest::Approx(1.0 / 12.0).epsilon(0.02));
}

TEST_CASE("gaussian is bounded and standard")
{
    const auto k = rng::key(11, rng::Stream::test);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    int beyond2 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng::gaussian(k, static_cast<std::uint64_t>(i));
        REQUIRE(std::abs(z) <= rng::kGaussianBound);
        sum += z;
        sq += z * z;
        if (std::abs(z) > 2.0) ++beyond2;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(static_cast<double>(beyond2) / n == doctest::Approx(0.0455).epsilon(0.06));
}

TEST_CASE("draws are pure functions of the key")
{
    const auto k = rng::key(3, rng::Stream::message, 4, 5, 6);
    CHECK(rng::uniform(k, 9) == rng::uniform(k, 9));
    CHECK(rng::gaussian(k, 9) == rng::gaussian(k, 9));
    rng::CounterStream a(k), b(k);
    for (int i = 0; i < 5; ++i) CHECK(a.uniform() == b.uniform());
    rng::CounterStream c(k);
    double mean = 0.0;
    for (int i = 0; i < 50000; ++i) mean += c.exponential(3.0);
    CHECK(mean / 50000 == doctest::Approx(3.0).epsilon(0.03));
}

}
