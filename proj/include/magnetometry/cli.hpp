#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "magnetometry/bayes.hpp"
#include "magnetometry/config.hpp"
#include "magnetometry/gaussian_filter.hpp"
#include "magnetometry/information.hpp"
#include "magnetometry/model.hpp"

namespace magnetometry {

/// Everything a workflow needs, read from a key = value config.
///
/// Keys (all optional): J, kappa, gamma, eta, B, t_final, n_steps, seed,
/// J_values, kappa_t_values, eta_values, n_records, prior_lo, prior_hi,
/// grid_points, checkpoints, convention, estimate_mode, inject_fault.
struct ExperimentSpec {
    ModelParams params{1e4, 1.0, 1.0, 1.0, 0.0};
    TimeGrid grid{1.0, 100000};
    std::uint64_t seed = 1;

    std::vector<double> J_values{1e2, 1e4, 1e6};
    std::vector<double> kappa_t_values{0.01, 0.1, 1.0};
    std::vector<double> eta_values{0.1, 0.5, 1.0};

    std::size_t n_records = 1;
    PriorInterval prior;
    std::size_t grid_points = 401;
    std::size_t checkpoints = 20;
    CurrentConvention convention = CurrentConvention::standard;
    /// per_record: average per-record summaries; joint: one posterior from
    /// all records.
    std::string estimate_mode = "per_record";
    /// Verification negative control: "none" or "fisher_closed".
    std::string inject_fault = "none";

    std::filesystem::path out_dir = ".";
    unsigned threads = 1;

    static ExperimentSpec from_config(const KeyValueConfig& cfg);
    KeyValueConfig to_config() const;

    /// Throws std::invalid_argument on empty sweeps or bad values.
    void validate() const;
};

/// One row per (eta, kappa_t, J), in that nesting order (J fastest).
std::vector<InformationReport> info_sweep_rows(const ExperimentSpec& spec);

/// Writes info_sweep.csv into spec.out_dir and returns its path.
std::filesystem::path cmd_info_sweep(const ExperimentSpec& spec);

/// Writes record_<seed>_<index>.txt files and returns their paths.
std::vector<std::filesystem::path> cmd_simulate(const ExperimentSpec& spec);

struct EstimateOutputs {
    std::filesystem::path posterior_csv;
    std::filesystem::path estimate_csv;
    std::vector<EstimateSummary> summaries;  ///< one per checkpoint
};

/// Posterior snapshots (posterior.csv: t, B, density, first record or the
/// joint posterior) and summaries vs kappa t (estimate.csv). With no record
/// files the prior is echoed and ratios are reported as nan.
EstimateOutputs cmd_estimate(const ExperimentSpec& spec, const std::vector<std::filesystem::path>& records);

struct VerifyRow {
    std::string check;
    double residual = 0.0;
    double threshold = 0.0;
    bool pass() const { return residual <= threshold; }
};

struct VerifyReport {
    std::vector<VerifyRow> rows;
    std::filesystem::path csv;
    bool passed() const;
};

/// Runs the closed-form/numeric equivalence checks and writes verify.csv.
VerifyReport cmd_verify(const ExperimentSpec& spec);

/// Header block shared by every output file: a timestamp line (the only
/// non-deterministic content) followed by the spec as commented config.
void write_provenance(std::ostream& out, const ExperimentSpec& spec, const std::string& workflow);

inline constexpr const char* kTimestampPrefix = "# generated: ";

}  // namespace magnetometry
