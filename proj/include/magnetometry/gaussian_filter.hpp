#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "magnetometry/model.hpp"

namespace magnetometry {

/// Which constant multiplies <P> in the mean photocurrent.
///
/// `standard`: dy = 2 sqrt(eta kappa Jbar) <P> dt + dw. This is the
/// convention under which the filter gain and the Riccati flow are the
/// optimal (Kalman) ones, and under which the record Fisher information
/// equals the closed form.
///
/// `root_two`: dy = sqrt(2 eta kappa Jbar) <P> dt + dw. Kept for
/// compatibility with records produced that way; generator and likelihood
/// stay self-consistent but the filter is no longer optimal.
enum class CurrentConvention { standard, root_two };

std::string_view to_string(CurrentConvention c);
CurrentConvention convention_from_string(std::string_view s);

/// Conditional Gaussian state of the effective (X, P) mode.
///
/// cov follows the symmetrized convention: cov(1,1) = 2 Var_c[P].
/// mean_x never feeds back into P and is carried only for completeness.
struct GaussianConditionalState {
    double mean_x = 0.0;
    double mean_p = 0.0;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
    double t = 0.0;

    double var_p() const { return 0.5 * cov(1, 1); }
};

struct SensitivityState {
    double dmean_p_dB = 0.0;
    double t = 0.0;
};

/// Closed-form conditional variance, 1 / (8 eta J (1 - e^{-kappa t/2}) + 2).
double var_p_closed(const ModelParams& params, double t);

/// Closed-form sigma_11 of the quadrature covariance: 1 + 4 J (1 - e^{-kappa t/2}).
double cov_xx_closed(const ModelParams& params, double t);

/// Coefficient h(t) such that the mean current is h(t) <P> dt.
double current_coefficient(const ModelParams& params, double t, CurrentConvention c);

/// Gain multiplying the innovation dw in the <P> update: 2 Var sqrt(eta kappa Jbar).
double innovation_gain(const ModelParams& params, double t);

/// Integrates dVar/dt = -4 eta kappa Jbar Var^2 from Var(0)=1/2 with RK4.
///
/// Returns the n_steps + 1 grid samples. Each grid step is split into
/// `substeps` RK4 steps; 0 picks the count per interval so that the
/// linearized stiffness times the substep stays below kAutoStepBound.
/// Throws ConvergenceError when any sample deviates from the closed form by
/// more than `max_rel_error`.
inline constexpr double kAutoStepBound = 0.02;
std::vector<double> var_p_ode(const ModelParams& params, const TimeGrid& grid, std::size_t substeps = 0,
                              double max_rel_error = 1e-3);

/// One Euler-Maruyama step of <P> with dw ~ N(0, dt); the covariance is
/// advanced deterministically with the closed forms.
GaussianConditionalState step_conditional_mean(const GaussianConditionalState& state, const ModelParams& params,
                                               double dt, double dw);

/// Same step written with the matrix moment equations,
/// d<r> = u dt + sigma M dw / sqrt(2), dsigma/dt = D - sigma M M^T sigma,
/// using explicit Euler for sigma. dw is a 2-vector of Wiener increments.
GaussianConditionalState step_conditional_mean_matrix(const GaussianConditionalState& state,
                                                      const ModelParams& params, double dt,
                                                      const Eigen::Vector2d& dw);

/// Deterministic sensitivity d<P>/dB: RK4 integration of
/// ds/dt = -gamma sqrt(Jbar) - 4 Var eta kappa Jbar s, Var from the closed form.
std::vector<double> sensitivity_ode(const ModelParams& params, const TimeGrid& grid, std::size_t substeps = 1);

/// Full 2x2 Riccati flow from sigma(0) = I with RK4. Throws ConvergenceError
/// if a sample stops being symmetric positive definite.
std::vector<Eigen::Matrix2d> cov_flow_matrix(const ModelParams& params, const TimeGrid& grid,
                                             std::size_t substeps = 1);

/// B-independent per-step coefficients of the discretized filter on a grid.
///
/// Step i (t_i = i dt):
///   innovation   dW_i   = dy_i - current[i] * P_i * dt
///   mean update  P_{i+1} = P_i + B * drift[i] * dt + gain[i] * dW_i
struct FilterCoefficients {
    TimeGrid grid;
    CurrentConvention convention = CurrentConvention::standard;
    std::vector<double> current;
    std::vector<double> gain;
    std::vector<double> drift;
};

FilterCoefficients filter_coefficients(const ModelParams& params, const TimeGrid& grid, CurrentConvention c);

/// Mean, variance and B-sensitivity of the discrete filter driven by a
/// given set of increments. All vectors have n_steps + 1 entries.
struct FilterTrajectory {
    std::vector<double> t;
    std::vector<double> mean_p;
    std::vector<double> var_p;
    std::vector<double> dmean_p_dB;
};

FilterTrajectory run_filter(const ModelParams& params, const FilterCoefficients& coeffs,
                            const std::vector<double>& increments);

/// Columnar text dump (t, mean_p, var_p, dmean_p_dB) with a versioned header.
void write_trajectory(std::ostream& out, const FilterTrajectory& traj, const ModelParams& params);

inline constexpr const char* kTrajectoryFormat = "magnetometry-trajectory v1";

}  // namespace magnetometry
