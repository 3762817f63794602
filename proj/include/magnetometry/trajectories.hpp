#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "magnetometry/gaussian_filter.hpp"
#include "magnetometry/model.hpp"

namespace magnetometry {

/// A discretized homodyne record generated at params.B (the true field).
///
/// increments[i] is the current integrated over [t_i, t_i + dt).
struct PhotocurrentRecord {
    std::vector<double> increments;
    TimeGrid grid;
    ModelParams params;
    std::uint64_t seed = 0;
    CurrentConvention convention = CurrentConvention::standard;
    std::string rng_algorithm;

    /// Records with eta = 0 carry no information about B.
    bool informative() const { return params.eta > 0.0; }
};

inline constexpr const char* kRecordFormat = "magnetometry-record v1";

/// Euler-Maruyama generation: <P> follows the filter update with
/// dW ~ N(0, dt), and each increment is current(t_i) <P>_i dt + dW_i.
/// Deterministic given the seed.
PhotocurrentRecord simulate_record(const ModelParams& params, const TimeGrid& grid, std::uint64_t seed,
                                   CurrentConvention convention = CurrentConvention::standard);

/// Record i uses seed derive_seed(seed_base, i).
std::vector<PhotocurrentRecord> batch_simulate(const ModelParams& params, const TimeGrid& grid,
                                               std::size_t n_records, std::uint64_t seed_base,
                                               CurrentConvention convention = CurrentConvention::standard,
                                               unsigned threads = 1);

/// Text layout:
///   # magnetometry-record v1
///   key = value lines (J, kappa, gamma, eta, B, t_final, n_steps, seed,
///                      convention, rng, informative)
///   ---
///   one increment per line, printed with 17 significant digits
void write_record(std::ostream& out, const PhotocurrentRecord& record);
PhotocurrentRecord read_record(std::istream& in);

void save_record(const std::filesystem::path& path, const PhotocurrentRecord& record);
PhotocurrentRecord load_record(const std::filesystem::path& path);

}  // namespace magnetometry
