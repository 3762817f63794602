#include "magnetometry/rng.hpp"

#include <cmath>
#include <numbers>

namespace magnetometry {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index)
{
    return splitmix64(base + index * 0x9E3779B97F4A7C15ULL);
}

double NormalStream::uniform()
{
    // 53 random bits, shifted to the open interval.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double NormalStream::normal()
{
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double phi = 2.0 * std::numbers::pi * uniform();
    cached_ = r * std::sin(phi);
    has_cached_ = true;
    return r * std::cos(phi);
}

}  // namespace magnetometry
