#include "magnetometry/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace magnetometry {

void ModelParams::validate() const
{
    if (!std::isfinite(J) || !std::isfinite(kappa) || !std::isfinite(gamma) || !std::isfinite(eta) ||
        !std::isfinite(B)) {
        throw std::invalid_argument("model parameters must be finite");
    }
    if (J <= 0.0) {
        throw std::invalid_argument("J must be positive, got " + std::to_string(J));
    }
    if (kappa <= 0.0) {
        throw std::invalid_argument("kappa must be positive, got " + std::to_string(kappa));
    }
    if (eta < 0.0 || eta > 1.0) {
        throw std::invalid_argument("eta must lie in [0, 1], got " + std::to_string(eta));
    }
}

ModelParams ModelParams::with_J(double j) const
{
    ModelParams p = *this;
    p.J = j;
    return p;
}

ModelParams ModelParams::with_eta(double e) const
{
    ModelParams p = *this;
    p.eta = e;
    return p;
}

ModelParams ModelParams::with_B(double b) const
{
    ModelParams p = *this;
    p.B = b;
    return p;
}

TimeGrid::TimeGrid(double t_final_, std::size_t n_steps_) : t_final(t_final_), n_steps(n_steps_)
{
    validate();
}

void TimeGrid::validate() const
{
    if (n_steps < 1) {
        throw std::invalid_argument("time grid needs at least one step");
    }
    if (!(t_final > 0.0) || !std::isfinite(t_final)) {
        throw std::invalid_argument("time grid needs a positive finite t_final");
    }
}

double jbar(const ModelParams& params, double t)
{
    if (t < 0.0) {
        throw std::invalid_argument("time must be non-negative");
    }
    return params.J * std::exp(-0.5 * params.kappa * t);
}

MomentMatrices moment_matrices(const ModelParams& params, double t)
{
    const double jb = jbar(params, t);
    MomentMatrices m;
    m.t = t;
    m.D.setZero();
    m.D(0, 0) = 2.0 * params.kappa * jb;
    m.M.setZero();
    m.M(1, 0) = std::sqrt(2.0 * params.eta * params.kappa * jb);
    m.u = Eigen::Vector2d(0.0, -params.gamma * params.B * std::sqrt(jb));
    return m;
}

ValidityReport validity_report(const ModelParams& params, double t, const ValidityThresholds& thresholds)
{
    ValidityReport r;
    r.kappa_t = params.kappa * t;
    r.gamma_b_t = std::abs(params.gamma * params.B * t);
    r.gaussian_ok = r.kappa_t <= thresholds.gaussian;
    r.small_field_ok = r.gamma_b_t <= thresholds.small_field;
    return r;
}

std::size_t recommended_steps(const ModelParams& params, double t_final, double bound)
{
    // Var(0) = 1/2, so the Riccati term reads eta kappa J dt.
    const double rate = std::max(params.kappa, params.eta * params.kappa * params.J);
    const double n = std::ceil(rate * t_final / bound);
    return static_cast<std::size_t>(std::max(1.0, n));
}

}  // namespace magnetometry
