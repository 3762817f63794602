#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include "magnetometry/model.hpp"

namespace magnetometry {

/// Every information quantity for one parameter point. All values in G^-2.
///
/// Q_tilde = F_record + Q_cond holds exactly; Q_bar is the ultimate bound
/// (independent of eta) and Q_tilde <= Q_bar with equality at eta = 1.
struct InformationReport {
    double J = 0.0;
    double kappa_t = 0.0;
    double eta = 0.0;
    double gamma_over_kappa = 0.0;
    double t = 0.0;

    double F_record = 0.0;
    double Q_cond = 0.0;
    double Q_tilde = 0.0;
    double Q_bar = 0.0;
    double K1 = 0.0;
    double K2 = 0.0;
};

/// Record Fisher information, closed form in t.
double fisher_record_closed(const ModelParams& params, double t);

/// Leading large-J form of the record Fisher information.
double fisher_record_largeJ(const ModelParams& params, double t);

/// Leading small-t form, (4/3) eta J^2 gamma^2 kappa t^3.
double fisher_record_small_t(const ModelParams& params, double t);

/// Conditional-state QFI, closed form in t.
double qfi_conditional(const ModelParams& params, double t);

/// Conditional-state QFI from a sensitivity and a variance, (d<P>/dB)^2 / Var.
double qfi_conditional_ratio(double dmean_p_dB, double var_p);

double k1_coefficient(const ModelParams& params, double t);
double k2_coefficient(const ModelParams& params, double t);

/// Assembles the full report. Throws ConvergenceError if the additive route
/// F + Q_cond and the K1 J + eta K2 J^2 route disagree beyond 1e-9.
InformationReport effective_qfi(const ModelParams& params, double t);

/// Ultimate QFI from the closed-form trace function: 4 d^2 log C / dB1 dB2.
double ultimate_qfi_closed(const ModelParams& params, double t);

/// Solution of the generalized master equation in phase space for a pair
/// of fields. C is the trace of the two-field operator.
struct GenMESolution {
    std::complex<double> C{1.0, 0.0};
    std::complex<double> x_m{0.0, 0.0};
    double sigma11 = 1.0;
    double B1 = 0.0;
    double B2 = 0.0;
    double t = 0.0;
};

GenMESolution genme_closed(const ModelParams& params, double t, double B1, double B2);

/// Adaptive Dormand-Prince integration of the (sigma11, x_m, C) system.
GenMESolution genme_ode(const ModelParams& params, double t, double B1, double B2, double rel_tol = 1e-12);

/// Ultimate QFI by integrating the phase-space system and taking the mixed
/// central difference of log|C| around params.B. The field step is chosen
/// so that |log C| is of order 1e-2, then halved once as a refinement
/// check; a disagreement above `refine_tol` throws ConvergenceError.
double ultimate_qfi_ode(const ModelParams& params, double t, double rel_tol = 1e-12, double refine_tol = 1e-6);

/// Deterministic filter quantities obtained by integrating
/// (Var, d<P>/dB, F) jointly as an ODE, independent of the closed forms.
struct NumericInformation {
    double var_p = 0.5;
    double dmean_p_dB = 0.0;
    double F_record = 0.0;
    double Q_cond = 0.0;
};

NumericInformation information_ode(const ModelParams& params, double t, double rel_tol = 1e-12);

/// Record FI from the sensitivity ODE, F = int 4 eta kappa Jbar (d<P>/dB)^2 dt.
/// Throws ConvergenceError when the result differs from the closed form by
/// more than `max_rel_mismatch` (pass a negative value to skip the check).
double fisher_record_numeric(const ModelParams& params, double t, double max_rel_mismatch = 1e-6);

/// Fixed-step variant on a grid: RK4 over (Var, d<P>/dB, F) with
/// `substeps` steps per grid interval.
double fisher_record_numeric(const ModelParams& params, const TimeGrid& grid, std::size_t substeps = 1);

enum class Quantity { F_record, Q_cond, Q_tilde, Q_bar };
enum class SweepAxis { J, kappa_t };

struct SlopeWindow {
    double lo = 1.0;
    double hi = 10.0;
    std::size_t points = 21;
};

double evaluate(const InformationReport& report, Quantity q);

/// Least-squares slope of log(quantity) against log(axis) on log-spaced
/// points of the window. The other coordinate is held at `fixed`
/// (kappa t when sweeping J, J when sweeping kappa t).
double scaling_slope(const ModelParams& base, Quantity q, SweepAxis axis, double fixed, const SlopeWindow& window);

void write_information_csv_header(std::ostream& out);
void write_information_csv_row(std::ostream& out, const InformationReport& r);

}  // namespace magnetometry
