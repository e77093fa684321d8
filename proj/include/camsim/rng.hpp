#pragma once

#include <cstdint>

// Counter-based random numbers. Every draw is a pure function of a key built
// from logical coordinates (seed, stream, node ids, time indices), so results
// never depend on evaluation order or thread schedule.
namespace camsim::rng {

enum class Stream : std::uint64_t {
    beacon_phase = 1,
    power_offset = 2,
    sigma = 3,
    message = 4,
    placement = 5,
    speed = 6,
    turn = 7,
    fleet = 8,
    sweep_cell = 9,
    equipped = 10,
    repetition = 11,
    test = 99,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix(std::uint64_t h, std::uint64_t v) noexcept
{
    return splitmix64(h ^ splitmix64(v + 0x632BE59BD9B4E019ULL));
}

constexpr std::uint64_t key(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0,
                            std::uint64_t c = 0) noexcept
{
    std::uint64_t h = splitmix64(seed);
    h = mix(h, static_cast<std::uint64_t>(stream));
    h = mix(h, a);
    h = mix(h, b);
    return mix(h, c);
}

/// Raw 64 bits at position `counter` of the stream identified by `k`.
constexpr std::uint64_t bits(std::uint64_t k, std::uint64_t counter) noexcept { return mix(k, counter); }

/// Uniform on (0, 1]; never returns zero so it is safe under log().
inline double uniform(std::uint64_t k, std::uint64_t counter) noexcept
{
    return static_cast<double>((bits(k, counter) >> 11) + 1) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on counters (2n, 2n+1). |z| <= kGaussianBound always.
double gaussian(std::uint64_t k, std::uint64_t n = 0) noexcept;

/// Largest magnitude gaussian() can return: sqrt(-2 ln 2^-53).
inline constexpr double kGaussianBound = 8.5717;

/// Sequential view over one key; for samplers that need a variable number of draws.
class CounterStream {
public:
    explicit CounterStream(std::uint64_t k) noexcept : key_(k) {}

    std::uint64_t next_bits() noexcept { return bits(key_, counter_++); }
    double uniform() noexcept { return rng::uniform(key_, counter_++); }
    double gaussian() noexcept
    {
        double z = rng::gaussian(key_, counter_);
        counter_ += 1;
        return z;
    }
    double exponential(double mean) noexcept;

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace camsim::rng
