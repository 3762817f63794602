#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "magnetometry/gaussian_filter.hpp"
#include "magnetometry/model.hpp"
#include "magnetometry/trajectories.hpp"

namespace magnetometry {

/// Everything the likelihood assumes known: all parameters except B, the
/// record grid and the current convention.
struct InferenceModel {
    ModelParams params;
    TimeGrid grid;
    CurrentConvention convention = CurrentConvention::standard;

    static InferenceModel from_record(const PhotocurrentRecord& record);

    /// Throws std::invalid_argument if the record was produced under a
    /// different grid, convention or non-B parameter set.
    void check_compatible(const PhotocurrentRecord& record) const;
};

/// Raised when most of the posterior mass sits at one edge of the grid.
class BoundaryError : public std::runtime_error {
public:
    explicit BoundaryError(const std::string& what) : std::runtime_error(what) {}
};

struct PriorInterval {
    double lo = -0.01;
    double hi = 0.01;
};

/// Log-likelihood of the first `n_used` increments (all by default) at
/// candidate field B, up to a B-independent constant. Runs the filter at B.
double log_likelihood(const InferenceModel& model, const PhotocurrentRecord& record, double B,
                      std::size_t n_used = static_cast<std::size_t>(-1));
double log_likelihood(const PhotocurrentRecord& record, double B);

/// log L(B) = c0 + c1 B + c2 B^2. The filter mean is affine in B for a
/// fixed record, so the likelihood is exactly quadratic.
struct QuadraticLogLikelihood {
    double c0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    std::size_t n_used = 0;

    double operator()(double B) const { return c0 + B * (c1 + B * c2); }
    QuadraticLogLikelihood& operator+=(const QuadraticLogLikelihood& o);
};

/// Quadratic coefficients after each of the requested prefix lengths
/// (`checkpoints` must be non-decreasing and at most the record length).
std::vector<QuadraticLogLikelihood> likelihood_quadratics(const InferenceModel& model,
                                                          const PhotocurrentRecord& record,
                                                          const std::vector<std::size_t>& checkpoints);

/// Posterior density on a uniform grid over the prior interval.
///
/// posterior[k] is a density: sum_k weights[k] * posterior[k] = 1 with
/// trapezoidal weights.
struct PosteriorGrid {
    std::vector<double> b_values;
    std::vector<double> weights;
    std::vector<double> log_likelihood;
    std::vector<double> posterior;
    PriorInterval prior;
    double t = 0.0;
    std::size_t n_records = 0;
};

struct PosteriorOptions {
    std::size_t points = 401;
    bool check_boundary = true;
};

/// Builds a normalized posterior from accumulated log-likelihood values.
PosteriorGrid normalize_posterior(const std::vector<double>& b_values, std::vector<double> log_likelihood,
                                  const PriorInterval& prior, const PosteriorOptions& options);

/// Posterior from every record's first `n_used` steps (all by default).
PosteriorGrid posterior(const InferenceModel& model, const std::vector<PhotocurrentRecord>& records,
                        const PriorInterval& prior, const PosteriorOptions& options = {},
                        std::size_t n_used = static_cast<std::size_t>(-1));

/// Posterior snapshots at each checkpoint step count.
std::vector<PosteriorGrid> posterior_history(const InferenceModel& model,
                                             const std::vector<PhotocurrentRecord>& records,
                                             const PriorInterval& prior, const std::vector<std::size_t>& checkpoints,
                                             const PosteriorOptions& options = {});

struct EstimateSummary {
    double mean = 0.0;
    double sd = 0.0;
    double sd_crb = 0.0;
    double ratio = 0.0;
    double t = 0.0;
};

/// Quadrature mean and standard deviation; sd_crb = fisher^{-1/2}. When
/// fisher is not positive, sd_crb is +inf and ratio is NaN.
EstimateSummary estimate(const PosteriorGrid& post, double fisher);

/// Uses the closed-form record FI at (params, post.t).
EstimateSummary estimate(const PosteriorGrid& post, const ModelParams& params);

void write_posterior_csv(std::ostream& out, const PosteriorGrid& post);
void write_estimate_csv_header(std::ostream& out);
void write_estimate_csv_row(std::ostream& out, double kappa_t, const EstimateSummary& s);

}  // namespace magnetometry
