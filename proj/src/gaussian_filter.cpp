#include "magnetometry/gaussian_filter.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "magnetometry/config.hpp"
#include "magnetometry/ode.hpp"

namespace magnetometry {

std::string_view to_string(CurrentConvention c)
{
    switch (c) {
    case CurrentConvention::standard:
        return "standard";
    case CurrentConvention::root_two:
        return "root_two";
    }
    return "unknown";
}

CurrentConvention convention_from_string(std::string_view s)
{
    if (s == "standard") {
        return CurrentConvention::standard;
    }
    if (s == "root_two") {
        return CurrentConvention::root_two;
    }
    throw std::invalid_argument("unknown current convention '" + std::string(s) + "'");
}

double var_p_closed(const ModelParams& params, double t)
{
    if (t < 0.0) {
        throw std::invalid_argument("time must be non-negative");
    }
    const double decayed = -std::expm1(-0.5 * params.kappa * t);
    return 1.0 / (8.0 * params.eta * params.J * decayed + 2.0);
}

double cov_xx_closed(const ModelParams& params, double t)
{
    return 1.0 - 4.0 * params.J * std::expm1(-0.5 * params.kappa * t);
}

double current_coefficient(const ModelParams& params, double t, CurrentConvention c)
{
    const double base = params.eta * params.kappa * jbar(params, t);
    return c == CurrentConvention::standard ? 2.0 * std::sqrt(base) : std::sqrt(2.0 * base);
}

double innovation_gain(const ModelParams& params, double t)
{
    return 2.0 * var_p_closed(params, t) * std::sqrt(params.eta * params.kappa * jbar(params, t));
}

std::vector<double> var_p_ode(const ModelParams& params, const TimeGrid& grid, std::size_t substeps,
                              double max_rel_error)
{
    params.validate();
    grid.validate();
    const auto rhs = [&](double t, double v) { return -4.0 * params.eta * params.kappa * jbar(params, t) * v * v; };

    std::vector<double> out(grid.n_steps + 1);
    out[0] = 0.5;
    const double dt = grid.dt();
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        std::size_t n_sub = substeps;
        if (n_sub == 0) {
            // Linearized stiffness of the Riccati term is 8 eta kappa Jbar Var.
            const double stiffness = 8.0 * params.eta * params.kappa * jbar(params, grid.time(i)) * out[i];
            n_sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(stiffness * dt / kAutoStepBound)));
        }
        out[i + 1] = rk4_advance(rhs, grid.time(i), out[i], dt, n_sub);
        const double ref = var_p_closed(params, grid.time(i + 1));
        const double rel = std::abs(out[i + 1] - ref) / ref;
        if (!std::isfinite(out[i + 1]) || rel > max_rel_error) {
            throw ConvergenceError("variance ODE departs from the closed form at t = " +
                                   format_double(grid.time(i + 1)) + " (relative error " + format_double(rel) +
                                   "); refine the grid");
        }
    }
    return out;
}

GaussianConditionalState step_conditional_mean(const GaussianConditionalState& state, const ModelParams& params,
                                               double dt, double dw)
{
    const double t = state.t;
    GaussianConditionalState next = state;
    next.mean_p += -params.B * params.gamma * std::sqrt(jbar(params, t)) * dt + innovation_gain(params, t) * dw;
    next.t = t + dt;
    next.cov.setZero();
    next.cov(0, 0) = cov_xx_closed(params, next.t);
    next.cov(1, 1) = 2.0 * var_p_closed(params, next.t);
    return next;
}

GaussianConditionalState step_conditional_mean_matrix(const GaussianConditionalState& state,
                                                      const ModelParams& params, double dt,
                                                      const Eigen::Vector2d& dw)
{
    const MomentMatrices mm = moment_matrices(params, state.t);
    const Eigen::Vector2d mean(state.mean_x, state.mean_p);
    const Eigen::Vector2d next_mean = mean + mm.u * dt + state.cov * mm.M * dw / std::sqrt(2.0);

    GaussianConditionalState next;
    next.mean_x = next_mean(0);
    next.mean_p = next_mean(1);
    next.cov = state.cov + (mm.D - state.cov * mm.M * mm.M.transpose() * state.cov) * dt;
    next.t = state.t + dt;
    return next;
}

std::vector<double> sensitivity_ode(const ModelParams& params, const TimeGrid& grid, std::size_t substeps)
{
    params.validate();
    grid.validate();
    const auto rhs = [&](double t, double s) {
        const double jb = jbar(params, t);
        return -params.gamma * std::sqrt(jb) - 4.0 * var_p_closed(params, t) * params.eta * params.kappa * jb * s;
    };
    std::vector<double> out(grid.n_steps + 1);
    out[0] = 0.0;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        out[i + 1] = rk4_advance(rhs, grid.time(i), out[i], grid.dt(), substeps);
    }
    return out;
}

std::vector<Eigen::Matrix2d> cov_flow_matrix(const ModelParams& params, const TimeGrid& grid, std::size_t substeps)
{
    params.validate();
    grid.validate();
    const auto rhs = [&](double t, const Eigen::Matrix2d& s) -> Eigen::Matrix2d {
        const MomentMatrices mm = moment_matrices(params, t);
        return mm.D - s * mm.M * mm.M.transpose() * s;
    };
    std::vector<Eigen::Matrix2d> out(grid.n_steps + 1);
    out[0] = Eigen::Matrix2d::Identity();
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        Eigen::Matrix2d next = rk4_advance(rhs, grid.time(i), out[i], grid.dt(), substeps);
        next = 0.5 * (next + next.transpose()).eval();
        if (!next.allFinite() || next.llt().info() != Eigen::Success) {
            throw ConvergenceError("covariance flow lost positive definiteness at t = " +
                                   format_double(grid.time(i + 1)));
        }
        out[i + 1] = next;
    }
    return out;
}

FilterCoefficients filter_coefficients(const ModelParams& params, const TimeGrid& grid, CurrentConvention c)
{
    params.validate();
    grid.validate();
    FilterCoefficients fc;
    fc.grid = grid;
    fc.convention = c;
    fc.current.resize(grid.n_steps);
    fc.gain.resize(grid.n_steps);
    fc.drift.resize(grid.n_steps);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        const double t = grid.time(i);
        fc.current[i] = current_coefficient(params, t, c);
        fc.gain[i] = innovation_gain(params, t);
        fc.drift[i] = -params.gamma * std::sqrt(jbar(params, t));
    }
    return fc;
}

FilterTrajectory run_filter(const ModelParams& params, const FilterCoefficients& coeffs,
                            const std::vector<double>& increments)
{
    const std::size_t n = coeffs.grid.n_steps;
    if (increments.size() != n) {
        throw std::invalid_argument("increment count does not match the filter grid");
    }
    const double dt = coeffs.grid.dt();
    FilterTrajectory tr;
    tr.t.resize(n + 1);
    tr.mean_p.resize(n + 1);
    tr.var_p.resize(n + 1);
    tr.dmean_p_dB.resize(n + 1);
    tr.mean_p[0] = 0.0;
    tr.dmean_p_dB[0] = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        tr.t[i] = coeffs.grid.time(i);
        tr.var_p[i] = var_p_closed(params, tr.t[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double h = coeffs.current[i];
        const double k = coeffs.gain[i];
        const double dw = increments[i] - h * tr.mean_p[i] * dt;
        tr.mean_p[i + 1] = tr.mean_p[i] + params.B * coeffs.drift[i] * dt + k * dw;
        tr.dmean_p_dB[i + 1] = tr.dmean_p_dB[i] + coeffs.drift[i] * dt - k * h * tr.dmean_p_dB[i] * dt;
    }
    return tr;
}

void write_trajectory(std::ostream& out, const FilterTrajectory& traj, const ModelParams& params)
{
    out << "# " << kTrajectoryFormat << '\n';
    out << "# J=" << format_double(params.J) << " kappa=" << format_double(params.kappa)
        << " gamma=" << format_double(params.gamma) << " eta=" << format_double(params.eta)
        << " B=" << format_double(params.B) << '\n';
    out << "t,mean_p,var_p,dmean_p_dB\n";
    for (std::size_t i = 0; i < traj.t.size(); ++i) {
        out << format_double(traj.t[i]) << ',' << format_double(traj.mean_p[i]) << ','
            << format_double(traj.var_p[i]) << ',' << format_double(traj.dmean_p_dB[i]) << '\n';
    }
}

}  // namespace magnetometry
