#include "magnetometry/spin_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <type_traits>

#include "magnetometry/config.hpp"
#include "magnetometry/information.hpp"
#include "magnetometry/ode.hpp"
#include "magnetometry/parallel.hpp"
#include "magnetometry/rng.hpp"

namespace magnetometry {

namespace {

using Complex = std::complex<double>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

bool is_real(const Eigen::MatrixXcd& m) { return m.imag().cwiseAbs().maxCoeff() == 0.0; }

/// exp(theta Y) as a real orthogonal matrix.
Eigen::MatrixXd rotation(const SpinOperators& ops, double theta)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(ops.Jy);
    const Eigen::VectorXcd phases =
        (es.eigenvalues().cast<Complex>() * Complex(0.0, -theta)).array().exp().matrix();
    const Eigen::MatrixXcd r = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
    return r.real();
}

/// exp(-rate (m_j - m_k)^2 dt / 2), elementwise.
Eigen::MatrixXd dephasing(const SpinOperators& ops, double rate, double dt)
{
    Eigen::MatrixXd d(ops.dim, ops.dim);
    for (int j = 0; j < ops.dim; ++j) {
        for (int k = 0; k < ops.dim; ++k) {
            const double dm = ops.m(j) - ops.m(k);
            d(j, k) = std::exp(-0.5 * rate * dm * dm * dt);
        }
    }
    return d;
}

/// Quantities shared by every step on a uniform grid.
struct StepData {
    double dt = 0.0;
    double gdt = 0.0;       // gamma dt
    double meas = 0.0;      // sqrt(eta kappa)
    bool rotate = false;
    Eigen::MatrixXd R;      // rotation at params.B
    Eigen::MatrixXd dph_unmeasured;
    Eigen::MatrixXd dph_full;
    Eigen::VectorXd gauss;  // exp(-eta kappa m^2 dt)

    StepData(const SpinOperators& ops, const ModelParams& params, const TimeGrid& grid)
    {
        params.validate();
        grid.validate();
        dt = grid.dt();
        gdt = params.gamma * dt;
        meas = std::sqrt(params.eta * params.kappa);
        const double theta = params.gamma * params.B * dt;
        rotate = theta != 0.0;
        if (rotate) {
            R = rotation(ops, theta);
        }
        dph_unmeasured = dephasing(ops, (1.0 - params.eta) * params.kappa, dt);
        dph_full = dephasing(ops, params.kappa, dt);
        gauss = (-params.eta * params.kappa * dt * ops.m.array().square()).exp().matrix();
    }

    /// Diagonal Kraus operator for increment dy, up to a positive constant.
    Eigen::VectorXd kraus(const SpinOperators& ops, double dy) const
    {
        const double a = meas * dy;
        const double shift = std::abs(a) * ops.J;
        return ((a * ops.m.array() - shift).exp() * gauss.array()).matrix();
    }
};

/// Picks an index with probability proportional to max(p, 0).
int sample_index(const Eigen::VectorXd& p, NormalStream& rng)
{
    const Eigen::VectorXd w = p.cwiseMax(0.0);
    const double total = w.sum();
    double u = rng.uniform() * total;
    for (int k = 0; k < w.size(); ++k) {
        u -= w(k);
        if (u <= 0.0) {
            return k;
        }
    }
    return static_cast<int>(w.size()) - 1;
}

/// Where the next increment comes from: sampled from the current outcome
/// distribution, or read from a given record.
class IncrementSource {
public:
    IncrementSource(std::uint64_t seed, double meas, double dt) : rng_(seed), meas_(meas), dt_(dt), sampled_(true) {}
    IncrementSource(const std::vector<double>& record, const TimeGrid& grid) : rng_(0), record_(&record)
    {
        if (record.size() < grid.n_steps) {
            throw std::invalid_argument("record shorter than the time grid");
        }
    }

    double next(std::size_t i, const Eigen::VectorXd& populations, const Eigen::VectorXd& m)
    {
        if (!sampled_) {
            return (*record_)[i];
        }
        const int k = sample_index(populations, rng_);
        return 2.0 * meas_ * m(k) * dt_ + std::sqrt(dt_) * rng_.normal();
    }

private:
    NormalStream rng_;
    const std::vector<double>* record_ = nullptr;
    double meas_ = 0.0;
    double dt_ = 0.0;
    bool sampled_ = false;
};

/// Tr(a b) without forming the product.
Complex trace_product(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b)
{
    return a.cwiseProduct(b.transpose()).sum();
}

template <typename Scalar>
void push_moments(SpinMoments& mom, const SpinOperators& ops, const Mat<Scalar>& rho, double t)
{
    const Eigen::MatrixXcd r = rho.template cast<Complex>();
    const double tr = r.trace().real();
    const Eigen::VectorXd pop = r.diagonal().real();
    const double jz = pop.dot(ops.m);
    const double jz2 = pop.dot(ops.m.cwiseAbs2());
    mom.t.push_back(t);
    mom.jx.push_back(trace_product(r, ops.Jx).real());
    mom.jy.push_back(trace_product(r, ops.Jy).real());
    mom.jz.push_back(jz);
    mom.var_jz.push_back(jz2 / tr - (jz / tr) * (jz / tr));
    mom.trace.push_back(tr);
}

std::string density_matrix_problem(const Eigen::MatrixXcd& rho, double tol)
{
    if (rho.rows() != rho.cols() || rho.rows() == 0) {
        return "density matrix must be square and non-empty";
    }
    if (!rho.allFinite()) {
        return "density matrix has non-finite entries";
    }
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) {
        return "density matrix is not Hermitian";
    }
    if (std::abs(rho.trace() - Complex(1.0, 0.0)) > tol) {
        return "density matrix trace differs from 1";
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol) {
        return "density matrix has a negative eigenvalue";
    }
    return {};
}

void require_positive(const Eigen::MatrixXcd& rho)
{
    const std::string problem = density_matrix_problem(rho, 1e-8);
    if (!problem.empty()) {
        throw ConvergenceError("state lost validity during evolution: " + problem);
    }
}

void require_dimension(const SpinOperators& ops, const Eigen::MatrixXcd& m)
{
    if (m.rows() != ops.dim || m.cols() != ops.dim) {
        throw std::invalid_argument("matrix dimension does not match 2J+1");
    }
}

template <typename Scalar>
UnconditionalTrajectory run_unconditional(const SpinOperators& ops, const DensityLikeMatrix& rho0,
                                          const ModelParams& params, const TimeGrid& grid)
{
    const StepData sd(ops, params, grid);
    const Mat<Scalar> R = sd.R.template cast<Scalar>();
    const Mat<Scalar> D = sd.dph_full.template cast<Scalar>();
    Mat<Scalar> rho;
    if constexpr (std::is_same_v<Scalar, double>) {
        rho = rho0.m.real();
    } else {
        rho = rho0.m;
    }

    UnconditionalTrajectory out;
    push_moments<Scalar>(out.moments, ops, rho, 0.0);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        if (sd.rotate) {
            rho = R * rho * R.transpose();
        }
        rho = rho.cwiseProduct(D);
        push_moments<Scalar>(out.moments, ops, rho, grid.time(i + 1));
    }
    out.final_state = {rho.template cast<Complex>(), MatrixRole::rho, grid.t_final};
    require_positive(out.final_state.m);
    return out;
}

ConditionalTrajectory run_conditional_dm(const SpinOperators& ops, const DensityLikeMatrix& rho0,
                                         const ModelParams& params, const TimeGrid& grid, IncrementSource& source)
{
    require_dimension(ops, rho0.m);
    const std::string problem = density_matrix_problem(rho0.m, 1e-8);
    if (!problem.empty()) {
        throw std::invalid_argument(problem);
    }
    const StepData sd(ops, params, grid);
    const Eigen::MatrixXcd R = sd.R.cast<Complex>();
    const Eigen::MatrixXcd Y = ops.Y.cast<Complex>();
    Eigen::MatrixXcd rho = rho0.m;
    Eigen::MatrixXcd tau = Eigen::MatrixXcd::Zero(ops.dim, ops.dim);

    ConditionalTrajectory out;
    out.increments.resize(grid.n_steps);
    push_moments<Complex>(out.moments, ops, rho, 0.0);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        if (sd.rotate) {
            rho = R * rho * R.adjoint();
            tau = R * tau * R.adjoint();
        }
        tau += sd.gdt * (Y * rho - rho * Y);
        const double dy = source.next(i, rho.diagonal().real(), ops.m);
        out.increments[i] = dy;
        const Eigen::VectorXd k = sd.kraus(ops, dy);
        const Eigen::MatrixXcd w = ((k * k.transpose()).cwiseProduct(sd.dph_unmeasured)).cast<Complex>();
        rho = rho.cwiseProduct(w);
        tau = tau.cwiseProduct(w);
        const double norm = rho.trace().real();
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw ConvergenceError("conditional state normalization failed");
        }
        rho /= norm;
        tau /= norm;
        push_moments<Complex>(out.moments, ops, rho, grid.time(i + 1));
    }
    require_positive(rho);
    out.score = tau.trace().real();
    out.q_cond = sld_qfi(rho, tau - out.score * rho);
    out.final_state = {rho, MatrixRole::rho, grid.t_final};
    out.final_tau = {tau, MatrixRole::tau, grid.t_final};
    return out;
}

/// y += s * Y x using the tridiagonal structure of Y.
void apply_Y(const SpinOperators& ops, const Eigen::VectorXd& x, double s, Eigen::VectorXd& y)
{
    for (int k = 1; k < ops.dim; ++k) {
        const double c = 0.5 * s * ops.ladder(k);
        y(k - 1) -= c * x(k);
        y(k) += c * x(k - 1);
    }
}

void push_pure_moments(SpinMoments& mom, const SpinOperators& ops, const Eigen::VectorXd& psi, double t)
{
    const Eigen::ArrayXd p = psi.array().square();
    const double jz = (p * ops.m.array()).sum();
    double jx = 0.0;
    for (int k = 1; k < ops.dim; ++k) {
        jx += ops.ladder(k) * psi(k - 1) * psi(k);
    }
    mom.t.push_back(t);
    mom.jx.push_back(jx);
    mom.jy.push_back(0.0);
    mom.jz.push_back(jz);
    mom.var_jz.push_back((p * ops.m.array().square()).sum() - jz * jz);
    mom.trace.push_back(p.sum());
}

ConditionalTrajectory run_conditional_pure(const SpinOperators& ops, const Eigen::VectorXd& psi0,
                                           const ModelParams& params, const TimeGrid& grid, IncrementSource& source,
                                           bool with_moments)
{
    if (params.eta != 1.0) {
        throw std::invalid_argument("pure-state route requires eta = 1");
    }
    if (psi0.size() != ops.dim || std::abs(psi0.norm() - 1.0) > 1e-10) {
        throw std::invalid_argument("initial state must be a normalized vector of size 2J+1");
    }
    const StepData sd(ops, params, grid);
    Eigen::VectorXd psi = psi0;
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(ops.dim);
    Eigen::VectorXd k(ops.dim);

    ConditionalTrajectory out;
    out.increments.resize(grid.n_steps);
    if (with_moments) {
        push_pure_moments(out.moments, ops, psi, 0.0);
    }
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        if (sd.rotate) {
            psi = sd.R * psi;
            phi = sd.R * phi;
        }
        apply_Y(ops, psi, sd.gdt, phi);
        const double dy = source.next(i, psi.array().square().matrix(), ops.m);
        out.increments[i] = dy;

        // exp(a m_k) by recurrence from m_0 = J; the common factor cancels
        // in the normalization.
        const double a = sd.meas * dy;
        const double step = std::exp(-a);
        double e = 1.0;
        for (int j = 0; j < ops.dim; ++j) {
            k(j) = e * sd.gauss(j);
            e *= step;
        }
        psi.array() *= k.array();
        phi.array() *= k.array();
        const double norm = psi.norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw ConvergenceError("conditional state normalization failed");
        }
        psi /= norm;
        phi /= norm;
        if (with_moments) {
            push_pure_moments(out.moments, ops, psi, grid.time(i + 1));
        }
    }
    const double overlap = psi.dot(phi);
    out.score = 2.0 * overlap;
    const Eigen::VectorXd dpsi = phi - overlap * psi;
    out.q_cond = 4.0 * dpsi.squaredNorm();
    out.final_state = {(psi * psi.transpose()).cast<Complex>(), MatrixRole::rho, grid.t_final};
    out.final_tau = {(phi * psi.transpose() + psi * phi.transpose()).cast<Complex>(), MatrixRole::tau,
                     grid.t_final};
    return out;
}

template <typename Scalar>
Complex run_generalized(const SpinOperators& ops, const Mat<Scalar>& rho0, const ModelParams& params,
                        const TimeGrid& grid, double B1, double B2, Mat<Scalar>* final_rho)
{
    ModelParams p = params;
    p.B = 0.0;
    const StepData sd(ops, p, grid);
    const double t1 = params.gamma * B1 * sd.dt;
    const double t2 = params.gamma * B2 * sd.dt;
    const Mat<Scalar> R1 = rotation(ops, t1).cast<Scalar>();
    const Mat<Scalar> R2 = t2 == t1 ? R1 : Mat<Scalar>(rotation(ops, t2).cast<Scalar>());
    const Mat<Scalar> D = sd.dph_full.cast<Scalar>();
    Mat<Scalar> rho = rho0;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        rho = (R1 * rho * R2.transpose()).cwiseProduct(D);
    }
    const Complex c(rho.trace());
    if (final_rho) {
        *final_rho = rho;
    }
    return c;
}

double log_abs_trace(const SpinOperators& ops, const Eigen::MatrixXd& rho0, const ModelParams& params,
                     const TimeGrid& grid, double B1, double B2)
{
    return std::log(std::abs(run_generalized<double>(ops, rho0, params, grid, B1, B2, nullptr)));
}

}  // namespace

SpinOperators build_spin_operators(double J, int dimension_cap)
{
    const double twice = 2.0 * J;
    if (!std::isfinite(J) || std::abs(twice - std::round(twice)) > 1e-12 || std::round(twice) < 1.0) {
        throw std::invalid_argument("spin J must be a positive half-integer");
    }
    const int dim = static_cast<int>(std::round(twice)) + 1;
    if (dim > dimension_cap) {
        throw std::invalid_argument("spin dimension " + std::to_string(dim) + " exceeds the cap of " +
                                    std::to_string(dimension_cap));
    }
    SpinOperators ops;
    ops.J = std::round(twice) / 2.0;
    ops.dim = dim;
    ops.m.resize(dim);
    ops.ladder = Eigen::VectorXd::Zero(dim);
    for (int k = 0; k < dim; ++k) {
        ops.m(k) = ops.J - k;
    }
    Eigen::MatrixXcd jp = Eigen::MatrixXcd::Zero(dim, dim);
    for (int k = 1; k < dim; ++k) {
        const double m = ops.m(k);
        ops.ladder(k) = std::sqrt(ops.J * (ops.J + 1.0) - m * (m + 1.0));
        jp(k - 1, k) = ops.ladder(k);
    }
    const Eigen::MatrixXcd jm = jp.adjoint();
    ops.Jx = 0.5 * (jp + jm);
    ops.Jy = (jp - jm) / Complex(0.0, 2.0);
    ops.Jz = ops.m.cast<Complex>().asDiagonal();
    ops.Y = (Complex(0.0, -1.0) * ops.Jy).real();
    return ops;
}

SpinAlgebraResiduals spin_algebra_residuals(const SpinOperators& ops)
{
    const Complex i(0.0, 1.0);
    auto comm = [](const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) -> Eigen::MatrixXcd { return a * b - b * a; };
    SpinAlgebraResiduals r;
    r.commutator = std::max({(comm(ops.Jx, ops.Jy) - i * ops.Jz).cwiseAbs().maxCoeff(),
                             (comm(ops.Jy, ops.Jz) - i * ops.Jx).cwiseAbs().maxCoeff(),
                             (comm(ops.Jz, ops.Jx) - i * ops.Jy).cwiseAbs().maxCoeff()});
    const Eigen::MatrixXcd casimir = ops.Jx * ops.Jx + ops.Jy * ops.Jy + ops.Jz * ops.Jz;
    r.casimir =
        (casimir - ops.J * (ops.J + 1.0) * Eigen::MatrixXcd::Identity(ops.dim, ops.dim)).cwiseAbs().maxCoeff();
    r.hermiticity = std::max({(ops.Jx - ops.Jx.adjoint()).cwiseAbs().maxCoeff(),
                              (ops.Jy - ops.Jy.adjoint()).cwiseAbs().maxCoeff(),
                              (ops.Jz - ops.Jz.adjoint()).cwiseAbs().maxCoeff()});
    return r;
}

Eigen::VectorXd spin_coherent_x(const SpinOperators& ops)
{
    const int n = ops.dim - 1;
    Eigen::VectorXd psi(ops.dim);
    for (int k = 0; k < ops.dim; ++k) {
        const double log_binom = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        psi(k) = std::exp(0.5 * log_binom - ops.J * std::log(2.0));
    }
    return psi / psi.norm();
}

DensityLikeMatrix spin_coherent_x_density(const SpinOperators& ops)
{
    const Eigen::VectorXd psi = spin_coherent_x(ops);
    return {(psi * psi.transpose()).cast<Complex>(), MatrixRole::rho, 0.0};
}

void check_density_matrix(const Eigen::MatrixXcd& rho, double tol)
{
    const std::string problem = density_matrix_problem(rho, tol);
    if (!problem.empty()) {
        throw std::invalid_argument(problem);
    }
}

UnconditionalTrajectory evolve_unconditional(const SpinOperators& ops, const DensityLikeMatrix& rho0,
                                             const ModelParams& params, const TimeGrid& grid)
{
    require_dimension(ops, rho0.m);
    check_density_matrix(rho0.m);
    return is_real(rho0.m) ? run_unconditional<double>(ops, rho0, params, grid)
                           : run_unconditional<Complex>(ops, rho0, params, grid);
}

ConditionalTrajectory evolve_conditional(const SpinOperators& ops, const DensityLikeMatrix& rho0,
                                         const ModelParams& params, const TimeGrid& grid, std::uint64_t seed)
{
    IncrementSource source(seed, std::sqrt(params.eta * params.kappa), grid.dt());
    return run_conditional_dm(ops, rho0, params, grid, source);
}

ConditionalTrajectory evolve_conditional(const SpinOperators& ops, const DensityLikeMatrix& rho0,
                                         const ModelParams& params, const TimeGrid& grid,
                                         const std::vector<double>& record)
{
    IncrementSource source(record, grid);
    return run_conditional_dm(ops, rho0, params, grid, source);
}

ConditionalTrajectory evolve_conditional_pure(const SpinOperators& ops, const Eigen::VectorXd& psi0,
                                              const ModelParams& params, const TimeGrid& grid, std::uint64_t seed,
                                              bool with_moments)
{
    IncrementSource source(seed, std::sqrt(params.eta * params.kappa), grid.dt());
    return run_conditional_pure(ops, psi0, params, grid, source, with_moments);
}

ConditionalTrajectory evolve_conditional_pure(const SpinOperators& ops, const Eigen::VectorXd& psi0,
                                              const ModelParams& params, const TimeGrid& grid,
                                              const std::vector<double>& record, bool with_moments)
{
    IncrementSource source(record, grid);
    return run_conditional_pure(ops, psi0, params, grid, source, with_moments);
}

double sld_qfi(const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& drho, double floor)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho + rho.adjoint()));
    const Eigen::MatrixXcd d = es.eigenvectors().adjoint() * drho * es.eigenvectors();
    const Eigen::VectorXd& lambda = es.eigenvalues();
    double q = 0.0;
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        for (Eigen::Index j = 0; j < lambda.size(); ++j) {
            const double s = lambda(i) + lambda(j);
            if (s > floor) {
                q += 2.0 * std::norm(d(i, j)) / s;
            }
        }
    }
    return q;
}

FisherTauResult fisher_tau(const ModelParams& params, const TimeGrid& grid, std::size_t n_trajectories,
                           std::uint64_t seed, const FisherTauOptions& options)
{
    if (n_trajectories < 2) {
        throw std::invalid_argument("fisher_tau needs at least 2 trajectories for a standard error");
    }
    const SpinOperators ops = build_spin_operators(params.J);
    const bool pure = params.eta == 1.0 && !options.force_density_matrix;
    const Eigen::VectorXd psi0 = spin_coherent_x(ops);
    const DensityLikeMatrix rho0 = spin_coherent_x_density(ops);

    FisherTauResult res;
    res.n_trajectories = n_trajectories;
    res.score_sq.resize(n_trajectories);
    res.q_cond.resize(n_trajectories);
    parallel_for(n_trajectories, options.threads, [&](std::size_t i) {
        const std::uint64_t s = derive_seed(seed, i);
        const ConditionalTrajectory tr = pure ? evolve_conditional_pure(ops, psi0, params, grid, s)
                                              : evolve_conditional(ops, rho0, params, grid, s);
        res.score_sq[i] = tr.score * tr.score;
        res.q_cond[i] = tr.q_cond;
    });

    const double n = static_cast<double>(n_trajectories);
    auto mean_and_stderr = [n](const std::vector<double>& v, double& mean, double& se) {
        mean = 0.0;
        for (double x : v) {
            mean += x;
        }
        mean /= n;
        double ss = 0.0;
        for (double x : v) {
            ss += (x - mean) * (x - mean);
        }
        se = std::sqrt(ss / (n - 1.0) / n);
    };
    mean_and_stderr(res.score_sq, res.F, res.F_stderr);
    mean_and_stderr(res.q_cond, res.Q_cond, res.Q_cond_stderr);
    std::vector<double> total(n_trajectories);
    for (std::size_t i = 0; i < n_trajectories; ++i) {
        total[i] = res.score_sq[i] + res.q_cond[i];
    }
    double unused = 0.0;
    mean_and_stderr(total, unused, res.total_stderr);
    return res;
}

GeneralizedSolution evolve_generalized(const SpinOperators& ops, const DensityLikeMatrix& rho0,
                                       const ModelParams& params, const TimeGrid& grid, double B1, double B2)
{
    require_dimension(ops, rho0.m);
    check_density_matrix(rho0.m);
    GeneralizedSolution out;
    if (is_real(rho0.m)) {
        Eigen::MatrixXd rho;
        out.C = run_generalized<double>(ops, rho0.m.real(), params, grid, B1, B2, &rho);
        out.rho_bar = {rho.cast<Complex>(), MatrixRole::rho_bar, grid.t_final};
    } else {
        Eigen::MatrixXcd rho;
        out.C = run_generalized<Complex>(ops, rho0.m, params, grid, B1, B2, &rho);
        out.rho_bar = {rho, MatrixRole::rho_bar, grid.t_final};
    }
    return out;
}

double ultimate_qfi_finiteJ(const ModelParams& params, const TimeGrid& grid, double delta_b, double refine_tol)
{
    params.validate();
    grid.validate();
    if (params.gamma == 0.0 || grid.t_final == 0.0) {
        return 0.0;
    }
    const SpinOperators ops = build_spin_operators(params.J);
    const Eigen::MatrixXd rho0 = spin_coherent_x_density(ops).m.real();
    if (delta_b <= 0.0) {
        // Aim for |log C| around 1e-4 at the widest separation.
        const double q = ultimate_qfi_closed(params, grid.t_final);
        if (!(q > 0.0)) {
            throw ConvergenceError("cannot choose a finite-difference step: Gaussian estimate is not positive");
        }
        delta_b = std::sqrt(2e-4 / q);
    }
    const double B = params.B;
    auto mixed = [&](double h) {
        const double pp = log_abs_trace(ops, rho0, params, grid, B + h, B + h);
        const double pm = log_abs_trace(ops, rho0, params, grid, B + h, B - h);
        const double mp = log_abs_trace(ops, rho0, params, grid, B - h, B + h);
        const double mm = log_abs_trace(ops, rho0, params, grid, B - h, B - h);
        if (std::abs(pm) < 1e-9) {
            throw ConvergenceError("finite-difference step too small: fidelity dip lost in roundoff");
        }
        return 4.0 * (pp - pm - mp + mm) / (4.0 * h * h);
    };
    const double coarse = mixed(delta_b);
    const double fine = mixed(0.5 * delta_b);
    if (!std::isfinite(fine) || std::abs(fine - coarse) > refine_tol * std::abs(fine)) {
        throw ConvergenceError("finite-difference refinement did not settle (" + format_double(coarse) + " vs " +
                               format_double(fine) + ")");
    }
    return fine;
}

double ultimate_qfi_finiteJ_exact(const ModelParams& params, const TimeGrid& grid)
{
    const SpinOperators ops = build_spin_operators(params.J);
    const StepData sd(ops, params, grid);
    const Eigen::MatrixXd& Y = ops.Y;
    Eigen::MatrixXd rho = spin_coherent_x_density(ops).m.real();
    // A = d rho_bar / dB1 and Z = d^2 rho_bar / dB1 dB2 at B1 = B2 = B;
    // everything stays real because the initial state and R are real.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(ops.dim, ops.dim);
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(ops.dim, ops.dim);
    const double g = sd.gdt;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        if (sd.rotate) {
            rho = sd.R * rho * sd.R.transpose();
            A = sd.R * A * sd.R.transpose();
            Z = sd.R * Z * sd.R.transpose();
        }
        const Eigen::MatrixXd Znew = Z - g * g * Y * rho * Y + g * Y * A.transpose() - g * A * Y;
        const Eigen::MatrixXd Anew = A + g * Y * rho;
        rho = rho.cwiseProduct(sd.dph_full);
        A = Anew.cwiseProduct(sd.dph_full);
        Z = Znew.cwiseProduct(sd.dph_full);
    }
    const double trA = A.trace();
    return 4.0 * (Z.trace() - trA * trA);
}

double OracleRow::rel_gap() const
{
    if (gaussian_value == 0.0) {
        return finite_J_value == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return std::abs(finite_J_value - gaussian_value) / std::abs(gaussian_value);
}

void write_oracle_csv_header(std::ostream& out)
{
    out << "J,kappa_t,eta,quantity,finite_J_value,gaussian_value,rel_gap,stderr\n";
}

void write_oracle_csv_row(std::ostream& out, const OracleRow& row)
{
    out << format_double(row.J) << ',' << format_double(row.kappa_t) << ',' << format_double(row.eta) << ','
        << row.quantity << ',' << format_double(row.finite_J_value) << ',' << format_double(row.gaussian_value)
        << ',' << format_double(row.rel_gap()) << ',' << format_double(row.stderr_value) << '\n';
}

}  // namespace magnetometry
