#pragma once

#include <cstdint>
#include <random>

namespace magnetometry {

/// SplitMix64 finalizer, used to derive independent sub-seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed of the `index`-th stream derived from `base`: the index-th output
/// of a SplitMix64 sequence started at `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Platform-stable standard normal stream.
///
/// std::mt19937_64 is fully specified by the standard; the normal transform
/// (Box-Muller on 53-bit uniforms) is done here rather than through
/// std::normal_distribution, whose algorithm is implementation-defined.
class NormalStream {
public:
    static constexpr const char* kAlgorithm = "mt19937_64+box_muller";

    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in (0, 1).
    double uniform();
    double normal();

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace magnetometry
