#include "magnetometry/information.hpp"

#include <array>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <boost/numeric/odeint.hpp>

#include "magnetometry/config.hpp"
#include "magnetometry/gaussian_filter.hpp"
#include "magnetometry/ode.hpp"

namespace magnetometry {

namespace odeint = boost::numeric::odeint;

namespace {

// Reduced variables: x = kappa t, g = gamma / kappa, E = e^{x/4}.
struct Reduced {
    double x;
    double g;
    double E;
    double Em1;  // E - 1 without cancellation
};

Reduced reduce(const ModelParams& params, double t)
{
    if (t < 0.0) {
        throw std::invalid_argument("time must be non-negative");
    }
    const double x = params.kappa * t;
    return {x, params.gamma / params.kappa, std::exp(0.25 * x), std::expm1(0.25 * x)};
}

// (4 eta J + 1) e^{x/2} - 4 eta J, written as 4 eta J (e^{x/2} - 1) + e^{x/2}.
double filter_denominator(double a, const Reduced& r)
{
    return a * std::expm1(0.5 * r.x) + r.E * r.E;
}

bool relative_close(double a, double b, double tol)
{
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 || std::abs(a - b) <= tol * scale;
}

template <typename State, typename System>
void integrate_dopri5(System system, State& state, double t_end, double rel_tol)
{
    if (t_end <= 0.0) {
        return;
    }
    auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(rel_tol * 1e-20, rel_tol);
    odeint::integrate_adaptive(stepper, system, state, 0.0, t_end, t_end * 1e-6);
}

}  // namespace

double fisher_record_closed(const ModelParams& params, double t)
{
    const Reduced r = reduce(params, t);
    const double eta = params.eta;
    const double J = params.J;
    const double a = 4.0 * eta * J;
    // Bracket -4ηJ - 12ηJE + 3(4ηJ+3)E^2 + (4ηJ+3)E^3 = a(E-1)(E^2+4E+1) + 3E^2(E+3).
    const double bracket = a * r.Em1 * (r.E * r.E + 4.0 * r.E + 1.0) + 3.0 * r.E * r.E * (r.E + 3.0);
    const double num = 64.0 * r.g * r.g * eta * J * J * std::exp(-r.x) * r.Em1 * r.Em1 * r.Em1;
    return num * bracket / (9.0 * filter_denominator(a, r));
}

double fisher_record_largeJ(const ModelParams& params, double t)
{
    const Reduced r = reduce(params, t);
    const double J = params.J;
    return 64.0 * r.g * r.g * params.eta * J * J * std::exp(-r.x) * r.Em1 * r.Em1 * r.Em1 *
           (4.0 * r.E + r.E * r.E + 1.0) / (9.0 * (r.E + 1.0));
}

double fisher_record_small_t(const ModelParams& params, double t)
{
    return 4.0 / 3.0 * params.eta * params.J * params.J * params.gamma * params.gamma * params.kappa * t * t * t;
}

double qfi_conditional(const ModelParams& params, double t)
{
    const Reduced r = reduce(params, t);
    const double J = params.J;
    const double a = 4.0 * params.eta * J;
    // 12ηJ - 4ηJ e^{-x/2} - (8ηJ+3)E + 3 = -(E-1) [a (E-1)(2E+1)/E^2 + 3].
    const double inner = a * r.Em1 * (2.0 * r.E + 1.0) / (r.E * r.E) + 3.0;
    const double num = 32.0 * r.g * r.g * J * r.Em1 * r.Em1 * inner * inner;
    return num / (9.0 * filter_denominator(a, r));
}

double qfi_conditional_ratio(double dmean_p_dB, double var_p)
{
    if (!(var_p > 0.0)) {
        throw std::invalid_argument("variance must be positive");
    }
    return dmean_p_dB * dmean_p_dB / var_p;
}

double k1_coefficient(const ModelParams& params, double t)
{
    const Reduced r = reduce(params, t);
    const double y = -std::expm1(-0.25 * r.x);
    return 32.0 * r.g * r.g * y * y;
}

double k2_coefficient(const ModelParams& params, double t)
{
    const Reduced r = reduce(params, t);
    // 1 - 8/3 e^{-x/4} + 2 e^{-x/2} - 1/3 e^{-x} = y^3 (4 - y) / 3 with y = 1 - e^{-x/4}.
    const double y = -std::expm1(-0.25 * r.x);
    return 64.0 * r.g * r.g * y * y * y * (4.0 - y) / 3.0;
}

InformationReport effective_qfi(const ModelParams& params, double t)
{
    params.validate();
    InformationReport rep;
    rep.J = params.J;
    rep.kappa_t = params.kappa * t;
    rep.eta = params.eta;
    rep.gamma_over_kappa = params.gamma_over_kappa();
    rep.t = t;
    rep.F_record = fisher_record_closed(params, t);
    rep.Q_cond = qfi_conditional(params, t);
    rep.Q_tilde = rep.F_record + rep.Q_cond;
    rep.K1 = k1_coefficient(params, t);
    rep.K2 = k2_coefficient(params, t);
    rep.Q_bar = ultimate_qfi_closed(params, t);

    const double via_k = rep.K1 * params.J + params.eta * rep.K2 * params.J * params.J;
    if (!relative_close(rep.Q_tilde, via_k, 1e-9)) {
        throw ConvergenceError("effective QFI routes disagree: F + Q = " + format_double(rep.Q_tilde) +
                               ", K1 J + eta K2 J^2 = " + format_double(via_k));
    }
    return rep;
}

namespace {

// log C = -q (B1 - B2)^2.
double trace_exponent(const ModelParams& params, double t)
{
    const Reduced r = reduce(params, t);
    const double J = params.J;
    // -4J E + (6J+3) E^2 - 2J = 2J (E-1)(3E+1) + 3E^2.
    const double inner = 2.0 * J * r.Em1 * (3.0 * r.E + 1.0) + 3.0 * r.E * r.E;
    return 4.0 * r.g * r.g / 3.0 * J * std::exp(-r.x) * r.Em1 * r.Em1 * inner;
}

}  // namespace

double ultimate_qfi_closed(const ModelParams& params, double t)
{
    // d^2/dB1 dB2 of -q (B1 - B2)^2 is 2q.
    return 4.0 * 2.0 * trace_exponent(params, t);
}

GenMESolution genme_closed(const ModelParams& params, double t, double B1, double B2)
{
    const Reduced r = reduce(params, t);
    const double J = params.J;
    const double dB = B1 - B2;
    const double sqrtJ = std::sqrt(J);
    // int_0^x sqrt(Jbar) sigma11 dx'
    const double integral = sqrtJ * ((1.0 + 4.0 * J) * 4.0 * (-std::expm1(-0.25 * r.x)) -
                                     16.0 * J / 3.0 * (-std::expm1(-0.75 * r.x)));
    GenMESolution s;
    s.B1 = B1;
    s.B2 = B2;
    s.t = t;
    s.sigma11 = cov_xx_closed(params, t);
    s.x_m = std::complex<double>(0.0, -0.5 * r.g * dB * integral);
    s.C = std::exp(-trace_exponent(params, t) * dB * dB);
    return s;
}

GenMESolution genme_ode(const ModelParams& params, double t, double B1, double B2, double rel_tol)
{
    params.validate();
    const double g = params.gamma_over_kappa();
    const double J = params.J;
    const double dB = B1 - B2;
    using State = std::array<double, 5>;  // sigma11, Re x_m, Im x_m, Re C, Im C
    const auto system = [&](const State& y, State& dy, double x) {
        const double jb = J * std::exp(-0.5 * x);
        const double sj = std::sqrt(jb);
        const double a = 0.5 * g * sj * dB;
        const double b = g * sj * dB;
        const double p = y[1] * y[3] - y[2] * y[4];
        const double q = y[1] * y[4] + y[2] * y[3];
        dy[0] = 2.0 * jb;
        dy[1] = 0.0;
        dy[2] = -a * y[0];
        dy[3] = b * q;
        dy[4] = -b * p;
    };
    State y{1.0, 0.0, 0.0, 1.0, 0.0};
    integrate_dopri5(system, y, params.kappa * t, rel_tol);

    GenMESolution s;
    s.B1 = B1;
    s.B2 = B2;
    s.t = t;
    s.sigma11 = y[0];
    s.x_m = {y[1], y[2]};
    s.C = {y[3], y[4]};
    return s;
}

double ultimate_qfi_ode(const ModelParams& params, double t, double rel_tol, double refine_tol)
{
    params.validate();
    if (t == 0.0 || params.gamma == 0.0) {
        return 0.0;
    }
    const auto log_abs_c = [&](double b1, double b2) {
        const GenMESolution s = genme_ode(params, t, b1, b2, rel_tol);
        return std::log(std::abs(s.C));
    };

    // Grow the field separation from a tiny value until the dip in |C| is
    // resolved. Starting large would put C deep in an oscillating tail and
    // stall the adaptive integrator.
    double dB = 1e-12;
    double probe = log_abs_c(params.B + 0.5 * dB, params.B - 0.5 * dB);
    for (int i = 0; i < 30 && std::isfinite(probe) && std::abs(probe) < 1e-6; ++i) {
        dB *= 10.0;
        probe = log_abs_c(params.B + 0.5 * dB, params.B - 0.5 * dB);
    }
    if (!std::isfinite(probe) || probe == 0.0) {
        throw ConvergenceError("trace function did not resolve a finite quadratic dip");
    }
    dB *= std::sqrt(1e-2 / std::abs(probe));

    const auto mixed_difference = [&](double h) {
        const double b = params.B;
        const double fpp = log_abs_c(b + h, b + h);
        const double fpm = log_abs_c(b + h, b - h);
        const double fmp = log_abs_c(b - h, b + h);
        const double fmm = log_abs_c(b - h, b - h);
        if (std::abs(fpm) < 1e-12 || std::abs(fmp) < 1e-12) {
            throw ConvergenceError("finite-difference step too small for log C");
        }
        return 4.0 * (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    };
    const double coarse = mixed_difference(0.5 * dB);
    const double fine = mixed_difference(0.25 * dB);
    if (!relative_close(coarse, fine, refine_tol)) {
        throw ConvergenceError("mixed difference of log C not stable under step refinement: " +
                               format_double(coarse) + " vs " + format_double(fine));
    }
    return fine;
}

NumericInformation information_ode(const ModelParams& params, double t, double rel_tol)
{
    params.validate();
    if (t < 0.0) {
        throw std::invalid_argument("time must be non-negative");
    }
    const double eta = params.eta;
    const double J = params.J;
    // Reduced sensitivity u = (d<P>/dB) / (g sqrt(J)), f = F / (g^2 J).
    using State = std::array<double, 3>;  // Var, u, f
    const auto system = [&](const State& y, State& dy, double x) {
        const double jb = J * std::exp(-0.5 * x);
        dy[0] = -4.0 * eta * jb * y[0] * y[0];
        dy[1] = -std::exp(-0.25 * x) - 4.0 * y[0] * eta * jb * y[1];
        dy[2] = 4.0 * eta * jb * y[1] * y[1];
    };
    State y{0.5, 0.0, 0.0};
    integrate_dopri5(system, y, params.kappa * t, rel_tol);

    const double g = params.gamma_over_kappa();
    NumericInformation out;
    out.var_p = y[0];
    out.dmean_p_dB = g * std::sqrt(J) * y[1];
    out.F_record = g * g * J * y[2];
    out.Q_cond = qfi_conditional_ratio(out.dmean_p_dB, out.var_p);
    return out;
}

double fisher_record_numeric(const ModelParams& params, double t, double max_rel_mismatch)
{
    const double F = information_ode(params, t).F_record;
    if (max_rel_mismatch >= 0.0) {
        const double ref = fisher_record_closed(params, t);
        if (!relative_close(F, ref, max_rel_mismatch)) {
            throw ConvergenceError("record FI from the sensitivity ODE (" + format_double(F) +
                                   ") disagrees with the closed form (" + format_double(ref) + ")");
        }
    }
    return F;
}

double fisher_record_numeric(const ModelParams& params, const TimeGrid& grid, std::size_t substeps)
{
    params.validate();
    grid.validate();
    const double eta = params.eta;
    const double kappa = params.kappa;
    const auto rhs = [&](double t, const Eigen::Vector3d& y) -> Eigen::Vector3d {
        const double jb = jbar(params, t);
        return {-4.0 * eta * kappa * jb * y(0) * y(0),
                -params.gamma * std::sqrt(jb) - 4.0 * y(0) * eta * kappa * jb * y(1),
                4.0 * eta * kappa * jb * y(1) * y(1)};
    };
    Eigen::Vector3d y(0.5, 0.0, 0.0);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        y = rk4_advance(rhs, grid.time(i), y, grid.dt(), substeps);
    }
    return y(2);
}

double evaluate(const InformationReport& report, Quantity q)
{
    switch (q) {
    case Quantity::F_record:
        return report.F_record;
    case Quantity::Q_cond:
        return report.Q_cond;
    case Quantity::Q_tilde:
        return report.Q_tilde;
    case Quantity::Q_bar:
        return report.Q_bar;
    }
    return 0.0;
}

double scaling_slope(const ModelParams& base, Quantity q, SweepAxis axis, double fixed, const SlopeWindow& window)
{
    if (window.points < 3) {
        throw std::invalid_argument("slope window needs at least 3 points");
    }
    if (!(window.lo > 0.0) || !(window.hi > window.lo)) {
        throw std::invalid_argument("slope window must satisfy 0 < lo < hi");
    }
    const double max_kappa_t = axis == SweepAxis::kappa_t ? window.hi : fixed;
    if (max_kappa_t > 1.0) {
        throw std::invalid_argument("slope window leaves the Gaussian regime (kappa t > 1)");
    }

    const std::size_t n = window.points;
    const double llo = std::log(window.lo);
    const double lhi = std::log(window.hi);
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(n - 1);
        const double v = std::exp(lx);
        ModelParams p = base;
        double t = 0.0;
        if (axis == SweepAxis::J) {
            p.J = v;
            t = fixed / p.kappa;
        } else {
            p.J = fixed;
            t = v / p.kappa;
        }
        const double value = evaluate(effective_qfi(p, t), q);
        if (!(value > 0.0)) {
            throw std::invalid_argument("quantity must be positive on the slope window");
        }
        const double ly = std::log(value);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double dn = static_cast<double>(n);
    return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

void write_information_csv_header(std::ostream& out)
{
    out << "J,kappa_t,eta,gamma_over_kappa,F_record,Q_cond,Q_tilde,Q_bar,K1,K2\n";
}

void write_information_csv_row(std::ostream& out, const InformationReport& r)
{
    out << format_double(r.J) << ',' << format_double(r.kappa_t) << ',' << format_double(r.eta) << ','
        << format_double(r.gamma_over_kappa) << ',' << format_double(r.F_record) << ','
        << format_double(r.Q_cond) << ',' << format_double(r.Q_tilde) << ',' << format_double(r.Q_bar) << ','
        << format_double(r.K1) << ',' << format_double(r.K2) << '\n';
}

}  // namespace magnetometry
