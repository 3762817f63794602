#pragma once

#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>

namespace magnetometry {

/// Physical configuration of the monitored ensemble.
///
/// Units: kappa in 1/time, gamma in 1/(time*G), B in Gauss. J is the total
/// spin (N/2) and is kept real so sweeps over decades stay smooth.
struct ModelParams {
    double J = 1.0;
    double kappa = 1.0;
    double gamma = 1.0;
    double eta = 1.0;
    double B = 0.0;

    /// Throws std::invalid_argument unless J > 0, kappa > 0, eta in [0, 1]
    /// and every field is finite.
    void validate() const;

    double gamma_over_kappa() const { return gamma / kappa; }
    double kappa_t(double t) const { return kappa * t; }

    ModelParams with_J(double j) const;
    ModelParams with_eta(double e) const;
    ModelParams with_B(double b) const;
};

/// Uniform time discretization, t_i = i * dt for i in [0, n_steps].
struct TimeGrid {
    double t_final = 1.0;
    std::size_t n_steps = 1;

    TimeGrid() = default;
    TimeGrid(double t_final, std::size_t n_steps);

    double dt() const { return t_final / static_cast<double>(n_steps); }
    double time(std::size_t i) const { return static_cast<double>(i) * dt(); }
    void validate() const;
};

/// Drift, diffusion and measurement matrices of the quadrature moment
/// equations at time t. Only D(0,0), M(1,0) and u(1) are nonzero.
struct MomentMatrices {
    Eigen::Matrix2d D;
    Eigen::Matrix2d M;
    Eigen::Vector2d u;
    double t = 0.0;
};

/// |<Jx(t)>| in the small-field approximation: J exp(-kappa t / 2).
double jbar(const ModelParams& params, double t);

MomentMatrices moment_matrices(const ModelParams& params, double t);

struct ValidityThresholds {
    double gaussian = 1.0;     // kappa t
    double small_field = 0.1;  // |gamma B t|
};

/// Advisory flags; nothing here is an error condition.
struct ValidityReport {
    double kappa_t = 0.0;
    double gamma_b_t = 0.0;
    bool gaussian_ok = true;
    bool small_field_ok = true;
};

ValidityReport validity_report(const ModelParams& params, double t,
                               const ValidityThresholds& thresholds = {});

/// Smallest step count with max(kappa dt, 4 eta kappa J dt Var^2) <= bound,
/// using the initial variance 1/2 for the second term.
std::size_t recommended_steps(const ModelParams& params, double t_final, double bound = 1e-3);

}  // namespace magnetometry
