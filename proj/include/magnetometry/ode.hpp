#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace magnetometry {

/// Raised when a numerical route disagrees with its reference beyond the
/// configured bound or loses a structural property (positivity, finiteness).
class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// One classical Runge-Kutta step for y' = f(t, y). State must support
/// `+`, scalar `*`.
template <typename State, typename Rhs>
State rk4_step(const Rhs& f, double t, const State& y, double h)
{
    const State k1 = f(t, y);
    const State k2 = f(t + 0.5 * h, y + (0.5 * h) * k1);
    const State k3 = f(t + 0.5 * h, y + (0.5 * h) * k2);
    const State k4 = f(t + h, y + h * k3);
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Advances from t over one interval of length h split into `substeps`
/// equal RK4 steps.
template <typename State, typename Rhs>
State rk4_advance(const Rhs& f, double t, const State& y, double h, std::size_t substeps)
{
    const double hs = h / static_cast<double>(substeps);
    State out = y;
    for (std::size_t k = 0; k < substeps; ++k) {
        out = rk4_step(f, t + static_cast<double>(k) * hs, out, hs);
    }
    return out;
}

}  // namespace magnetometry
