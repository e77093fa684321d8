#include "camsim/rng.hpp"

#include <cmath>
#include <numbers>

namespace camsim::rng {

double gaussian(std::uint64_t k, std::uint64_t n) noexcept
{
    // Each gaussian consumes its own pair of sub-keys so n and n+1 never share bits.
    const std::uint64_t sub = mix(k, n ^ 0xA5A5A5A5A5A5A5A5ULL);
    const double u1 = uniform(sub, 0);
    const double u2 = uniform(sub, 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double CounterStream::exponential(double mean) noexcept { return -mean * std::log(uniform()); }

}  // namespace camsim::rng
