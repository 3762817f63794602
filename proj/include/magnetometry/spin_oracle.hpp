#pragma once

// Finite-J brute-force layer. Everything here is represented in the Jz
// eigenbasis ordered m = J, J-1, ..., -J.
//
// Time stepping is an exact quantum instrument per step: a rotation
// exp(-i gamma B dt Jy), followed by the diagonal homodyne Kraus operator
// exp(sqrt(eta kappa) Jz dy - eta kappa Jz^2 dt) and the leftover dephasing
// of the undetected fraction. Each step is completely positive, so no
// positivity clipping is ever needed, and records are sampled exactly from
// the step's outcome distribution.

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "magnetometry/model.hpp"

namespace magnetometry {

struct SpinOperators {
    double J = 0.0;
    int dim = 0;
    Eigen::MatrixXcd Jx;
    Eigen::MatrixXcd Jy;
    Eigen::MatrixXcd Jz;
    Eigen::VectorXd m;  ///< Jz eigenvalues, m(0) = J
    /// Ladder couplings l(k) = <k-1|J+|k> for k = 1..dim-1 (l(0) unused).
    Eigen::VectorXd ladder;
    /// Real antisymmetric Y = -i Jy, so exp(-i theta Jy) = exp(theta Y).
    Eigen::MatrixXd Y;
};

inline constexpr int kDefaultDimensionCap = 201;

/// Throws std::invalid_argument unless 2J is a positive integer and
/// 2J + 1 <= dimension_cap.
SpinOperators build_spin_operators(double J, int dimension_cap = kDefaultDimensionCap);

/// Max-norm residuals of [Jx,Jy] - iJz (and cyclic) and of the Casimir.
struct SpinAlgebraResiduals {
    double commutator = 0.0;
    double casimir = 0.0;
    double hermiticity = 0.0;
};
SpinAlgebraResiduals spin_algebra_residuals(const SpinOperators& ops);

enum class MatrixRole { rho, tau, rho_bar };

struct DensityLikeMatrix {
    Eigen::MatrixXcd m;
    MatrixRole role = MatrixRole::rho;
    double t = 0.0;
};

/// |J, J>_x: real amplitudes 2^-J sqrt(binom(2J, J - m)).
Eigen::VectorXd spin_coherent_x(const SpinOperators& ops);
DensityLikeMatrix spin_coherent_x_density(const SpinOperators& ops);

/// Throws unless rho is Hermitian, unit-trace and positive within tol.
void check_density_matrix(const Eigen::MatrixXcd& rho, double tol = 1e-8);

/// Per-step expectation values, starting with the initial state.
struct SpinMoments {
    std::vector<double> t;
    std::vector<double> jx;
    std::vector<double> jy;
    std::vector<double> jz;
    std::vector<double> var_jz;
    std::vector<double> trace;
};

struct UnconditionalTrajectory {
    SpinMoments moments;
    DensityLikeMatrix final_state;
};

/// Lindblad evolution with H = gamma B Jy and dissipator kappa D[Jz].
UnconditionalTrajectory evolve_unconditional(const SpinOperators& ops, const DensityLikeMatrix& rho0,
                                             const ModelParams& params, const TimeGrid& grid);

struct ConditionalTrajectory {
    SpinMoments moments;
    std::vector<double> increments;
    DensityLikeMatrix final_state;
    DensityLikeMatrix final_tau;  ///< dB of the unnormalized state over its trace
    double score = 0.0;           ///< d/dB log p(record) = Tr tau
    double q_cond = 0.0;          ///< QFI of the final conditional state
};

/// Samples a record at params.B, co-evolving the state and its B-sensitivity.
ConditionalTrajectory evolve_conditional(const SpinOperators& ops, const DensityLikeMatrix& rho0,
                                         const ModelParams& params, const TimeGrid& grid, std::uint64_t seed);

/// Same dynamics driven by a given record (one increment per step).
ConditionalTrajectory evolve_conditional(const SpinOperators& ops, const DensityLikeMatrix& rho0,
                                         const ModelParams& params, const TimeGrid& grid,
                                         const std::vector<double>& record);

/// Pure-state route (eta = 1 only), real arithmetic and O(dim) per step when
/// B = 0. Moments are recorded when `with_moments` is set.
ConditionalTrajectory evolve_conditional_pure(const SpinOperators& ops, const Eigen::VectorXd& psi0,
                                              const ModelParams& params, const TimeGrid& grid, std::uint64_t seed,
                                              bool with_moments = false);
ConditionalTrajectory evolve_conditional_pure(const SpinOperators& ops, const Eigen::VectorXd& psi0,
                                              const ModelParams& params, const TimeGrid& grid,
                                              const std::vector<double>& record, bool with_moments = false);

/// QFI from the symmetric logarithmic derivative; eigenvalue pairs with
/// lambda_i + lambda_j below `floor` are skipped.
double sld_qfi(const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& drho, double floor = 1e-12);

struct FisherTauOptions {
    unsigned threads = 1;
    bool force_density_matrix = false;
};

struct FisherTauResult {
    double F = 0.0;
    double F_stderr = 0.0;
    double Q_cond = 0.0;  ///< trajectory mean of the conditional QFI
    double Q_cond_stderr = 0.0;
    double total_stderr = 0.0;  ///< standard error of F + Q_cond
    std::size_t n_trajectories = 0;
    std::vector<double> score_sq;
    std::vector<double> q_cond;
};

/// Monte-Carlo record Fisher information E[(Tr tau)^2] from a spin coherent
/// initial state, trajectory i seeded with derive_seed(seed, i).
FisherTauResult fisher_tau(const ModelParams& params, const TimeGrid& grid, std::size_t n_trajectories,
                           std::uint64_t seed, const FisherTauOptions& options = {});

/// Generalized master equation: rho_bar' = Dph o (R(B1) rho_bar R(B2)^T).
struct GeneralizedSolution {
    DensityLikeMatrix rho_bar;
    std::complex<double> C;  ///< Tr rho_bar
};
GeneralizedSolution evolve_generalized(const SpinOperators& ops, const DensityLikeMatrix& rho0,
                                       const ModelParams& params, const TimeGrid& grid, double B1, double B2);

/// Q_bar = 4 d^2 log|Tr rho_bar| / dB1 dB2 by a mixed central difference
/// at step delta_b, checked against delta_b / 2. delta_b <= 0 picks a step
/// from the Gaussian estimate. Throws ConvergenceError when the difference
/// is swamped by roundoff or refinement changes the result by more than
/// `refine_tol` (relative).
double ultimate_qfi_finiteJ(const ModelParams& params, const TimeGrid& grid, double delta_b = 0.0,
                            double refine_tol = 1e-2);

/// Same quantity from exact first and mixed second B-derivatives of rho_bar.
double ultimate_qfi_finiteJ_exact(const ModelParams& params, const TimeGrid& grid);

struct OracleRow {
    double J = 0.0;
    double kappa_t = 0.0;
    double eta = 0.0;
    std::string quantity;
    double finite_J_value = 0.0;
    double gaussian_value = 0.0;
    double stderr_value = 0.0;

    double rel_gap() const;
};

void write_oracle_csv_header(std::ostream& out);
void write_oracle_csv_row(std::ostream& out, const OracleRow& row);

}  // namespace magnetometry
