#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "magnetometry/gaussian_filter.hpp"
#include "magnetometry/information.hpp"
#include "magnetometry/ode.hpp"
#include "magnetometry/rng.hpp"
#include "oracles.hpp"

using namespace magnetometry;

TEST_CASE("closed-form variance")
{
    CHECK(var_p_closed({1e4, 1.0, 1.0, 1.0, 0.0}, 0.0) == 0.5);
    CHECK(var_p_closed({1e4, 1.0, 1.0, 0.0, 0.0}, 3.7) == 0.5);
    CHECK(var_p_closed({10.0, 1.0, 1.0, 1.0, 0.0}, 200.0) == doctest::Approx(1.0 / 82).epsilon(1e-14));
    CHECK(cov_xx_closed({1.0, 1.0, 1.0, 0.0, 0.0}, 1.0) == doctest::Approx(1 + 4 * (1 - std::exp(-0.5))));
}

TEST_CASE("variance squeezes monotonically for eta > 0")
{
    oracle::Gen gen(3);
    for (int i = 0; i < 100; ++i) {
        const ModelParams p{gen.log_uniform(1e-2, 1e8), gen.log_uniform(0.1, 10), 1.0, gen.uniform(1e-3, 1.0), 0.0};
        double prev = var_p_closed(p, 0.0);
        CHECK(prev == 0.5);
        for (double kt : {1e-6, 1e-3, 0.01, 0.1, 0.5, 1.0, 2.0}) {
            const double v = var_p_closed(p, kt / p.kappa);
            CHECK(v > 0.0);
            CHECK(v <= 0.5);
            CHECK(v < prev);
            prev = v;
        }
    }
}

TEST_CASE("variance ODE")
{
    SUBCASE("unmonitored stays at one half")
    {
        const auto v = var_p_ode({1e4, 1.0, 1.0, 0.0, 0.0}, TimeGrid(1.0, 100));
        for (double x : v) {
            CHECK(x == 0.5);
        }
    }
    SUBCASE("matches the closed form at J = 1e4")
    {
        const ModelParams p{1e4, 1.0, 1.0, 1.0, 0.0};
        const TimeGrid g(1.0, 100000);
        const auto v = var_p_ode(p, g, 0, 1e-6);
        double worst = 0.0;
        for (std::size_t i = 0; i < v.size(); i += 97) {
            worst = std::max(worst, std::abs(v[i] / var_p_closed(p, g.time(i)) - 1.0));
        }
        CHECK(worst <= 1e-6);
    }
    SUBCASE("initial slope is -eta kappa J")
    {
        const ModelParams p{1.0, 1.0, 1.0, 1.0, 0.0};
        const auto v = var_p_ode(p, TimeGrid(1e-3, 10), 1);
        CHECK((v.back() - 0.5) / 1e-3 == doctest::Approx(-p.eta * p.kappa * p.J).epsilon(2e-3));
    }
    SUBCASE("coarse stiff grid is reported")
    {
        CHECK_THROWS_AS(var_p_ode({1e6, 1.0, 1.0, 1.0, 0.0}, TimeGrid(1.0, 10), 1), ConvergenceError);
    }
    SUBCASE("error shrinks with at least first order")
    {
        const ModelParams p{100.0, 1.0, 1.0, 1.0, 0.0};
        auto err = [&](std::size_t n) {
            const auto v = var_p_ode(p, TimeGrid(1.0, n), 1, 1.0);
            return std::abs(v.back() / var_p_closed(p, 1.0) - 1.0);
        };
        const double e1 = err(200);
        const double e2 = err(400);
        CHECK(e1 > 0.0);
        CHECK(std::log2(e1 / e2) >= 1.0);
    }
}

TEST_CASE("conditional mean step")
{
    SUBCASE("no field, no monitoring: mean frozen")
    {
        GaussianConditionalState s;
        s.mean_p = 0.37;
        const ModelParams p{100.0, 1.0, 1.0, 0.0, 0.0};
        const auto n = step_conditional_mean(s, p, 0.01, 0.123);
        CHECK(n.mean_p == 0.37);
        CHECK(n.t == 0.01);
    }
    SUBCASE("first step from t = 0")
    {
        const ModelParams p{400.0, 2.0, 3.0, 0.5, 0.02};
        const double dt = 1e-3, dw = 0.02;
        const auto n = step_conditional_mean({}, p, dt, dw);
        CHECK(n.mean_p == doctest::Approx(-p.B * p.gamma * std::sqrt(p.J) * dt + std::sqrt(p.eta * p.kappa * p.J) * dw)
                              .epsilon(1e-14));
    }
    SUBCASE("unmonitored drift integrates to the closed sensitivity")
    {
        const ModelParams p{1e4, 1.0, 1.0, 0.0, 0.005};
        GaussianConditionalState s;
        const std::size_t n = 20000;
        const double dt = 1.0 / n;
        for (std::size_t i = 0; i < n; ++i) {
            s = step_conditional_mean(s, p, dt, 0.7);
        }
        CHECK(s.mean_p == doctest::Approx(p.B * oracle::sensitivity_unmonitored(p.J, p.kappa, p.gamma, 1.0)).epsilon(1e-4));
    }
    SUBCASE("matrix form gives the same mean update and keeps sigma12 = 0")
    {
        const ModelParams p{250.0, 1.5, 2.0, 0.8, 0.01};
        GaussianConditionalState a, b;
        NormalStream rng(5);
        const double dt = 1e-5;
        for (int i = 0; i < 2000; ++i) {
            const double dw = std::sqrt(dt) * rng.normal();
            a = step_conditional_mean(a, p, dt, dw);
            b = step_conditional_mean_matrix(b, p, dt, Eigen::Vector2d(dw, 0.0));
            b.mean_p = a.mean_p;  // compare one step at a time
        }
        GaussianConditionalState c = b;
        const auto d1 = step_conditional_mean(c, p, dt, 0.001);
        c.cov(1, 1) = 2.0 * var_p_closed(p, c.t);
        const auto d2 = step_conditional_mean_matrix(c, p, dt, Eigen::Vector2d(0.001, 0.0));
        CHECK(d2.mean_p == doctest::Approx(d1.mean_p).epsilon(1e-12));
        CHECK(b.cov(0, 1) == 0.0);
        CHECK(b.cov(1, 0) == 0.0);
        CHECK(b.var_p() == doctest::Approx(var_p_closed(p, b.t)).epsilon(1e-3));
    }
}

TEST_CASE("sensitivity ODE")
{
    const TimeGrid g(1.0, 2000);
    SUBCASE("no coupling, no sensitivity")
    {
        for (double s : sensitivity_ode({1e4, 1.0, 0.0, 1.0, 0.0}, g)) {
            CHECK(s == 0.0);
        }
    }
    SUBCASE("unmonitored closed form")
    {
        const ModelParams p{300.0, 2.0, 1.5, 0.0, 0.0};
        const auto s = sensitivity_ode(p, g);
        for (std::size_t i = 0; i <= g.n_steps; i += 100) {
            CHECK(s[i] == doctest::Approx(oracle::sensitivity_unmonitored(p.J, p.kappa, p.gamma, g.time(i))).epsilon(1e-12));
        }
    }
    SUBCASE("integrating 4 eta kappa Jbar s^2 reproduces the record FI")
    {
        const ModelParams p{1e4, 1.0, 1.0, 1.0, 0.0};
        const TimeGrid fine(1.0, 20000);
        const auto s = sensitivity_ode(p, fine, 4);
        // Simpson's rule on the sampled integrand.
        double acc = 0.0;
        const double h = fine.dt();
        for (std::size_t i = 0; i <= fine.n_steps; ++i) {
            const double f = 4 * p.eta * p.kappa * jbar(p, fine.time(i)) * s[i] * s[i];
            const double w = (i == 0 || i == fine.n_steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            acc += w * f;
        }
        acc *= h / 3;
        CHECK(acc == doctest::Approx(fisher_record_closed(p, 1.0)).epsilon(1e-6));
    }
    SUBCASE("small-t expansion and sign")
    {
        const ModelParams p{50.0, 1.0, 2.0, 1.0, 0.0};
        const auto s = sensitivity_ode(p, TimeGrid(1e-5, 10));
        CHECK(s.back() == doctest::Approx(-p.gamma * std::sqrt(p.J) * 1e-5).epsilon(1e-4));
        for (double v : sensitivity_ode(p, g)) {
            CHECK(v <= 0.0);
        }
    }
}

TEST_CASE("matrix Riccati flow")
{
    SUBCASE("unmonitored, kappa t = 1, J = 1")
    {
        const auto s = cov_flow_matrix({1.0, 1.0, 1.0, 0.0, 0.0}, TimeGrid(1.0, 1000));
        CHECK(s.back()(0, 0) == doctest::Approx(1 + 4 * (1 - std::exp(-0.5))).epsilon(1e-12));
        CHECK(s.back()(1, 1) == 1.0);
        CHECK(s.back()(0, 1) == 0.0);
    }
    SUBCASE("monitored variance matches closed form")
    {
        const ModelParams p{1e4, 1.0, 1.0, 1.0, 0.0};
        const TimeGrid g(0.5, 100000);
        const auto s = cov_flow_matrix(p, g);
        CHECK(s.back()(1, 1) / 2 == doctest::Approx(var_p_closed(p, 0.5)).epsilon(1e-6));
    }
    SUBCASE("symmetric, positive definite, uncertainty respected")
    {
        oracle::Gen gen(17);
        for (int k = 0; k < 20; ++k) {
            const ModelParams p{gen.log_uniform(1e-1, 1e3), gen.log_uniform(0.1, 5), 1.0, gen.uniform(0, 1), 0.0};
            const auto s = cov_flow_matrix(p, TimeGrid(1.0 / p.kappa, 4000));
            for (std::size_t i = 0; i < s.size(); i += 400) {
                CHECK(s[i](0, 1) == 0.0);
                CHECK(s[i](1, 0) == 0.0);
                CHECK(s[i].llt().info() == Eigen::Success);
                CHECK(s[i].determinant() >= 1.0 - 1e-9);
            }
        }
    }
}

TEST_CASE("current conventions")
{
    const ModelParams p{100.0, 2.0, 1.0, 0.5, 0.0};
    const double a = current_coefficient(p, 0.3, CurrentConvention::standard);
    const double b = current_coefficient(p, 0.3, CurrentConvention::root_two);
    CHECK(a == doctest::Approx(2 * std::sqrt(p.eta * p.kappa * jbar(p, 0.3))));
    CHECK(a / b == doctest::Approx(std::sqrt(2.0)));
    CHECK(innovation_gain(p, 0.0) == doctest::Approx(std::sqrt(p.eta * p.kappa * p.J)));
    CHECK(convention_from_string(to_string(CurrentConvention::root_two)) == CurrentConvention::root_two);
    CHECK(convention_from_string("standard") == CurrentConvention::standard);
    CHECK_THROWS_AS(convention_from_string("sqrt2"), std::invalid_argument);
}

TEST_CASE("filter over a record")
{
    const ModelParams p{1e3, 1.0, 1.0, 1.0, 0.002};
    const TimeGrid g(1.0, 5000);
    const auto fc = filter_coefficients(p, g, CurrentConvention::standard);
    std::vector<double> inc(g.n_steps);
    NormalStream rng(8);
    for (double& v : inc) {
        v = std::sqrt(g.dt()) * rng.normal();
    }
    const auto tr = run_filter(p, fc, inc);
    CHECK(tr.var_p.back() == doctest::Approx(var_p_closed(p, 1.0)));
    // The discrete sensitivity converges to the continuous one.
    CHECK(tr.dmean_p_dB.back() == doctest::Approx(sensitivity_ode(p, g, 4).back()).epsilon(2e-3));
    // The mean is affine in B with slope dmean_p_dB.
    const auto tr0 = run_filter(p.with_B(0.0), fc, inc);
    CHECK(tr.mean_p.back() - tr0.mean_p.back() == doctest::Approx(p.B * tr.dmean_p_dB.back()).epsilon(1e-9));
    inc.pop_back();
    CHECK_THROWS_AS(run_filter(p, fc, inc), std::invalid_argument);

    std::ostringstream out;
    write_trajectory(out, tr, p);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "# magnetometry-trajectory v1");
    std::getline(in, line);
    std::getline(in, line);
    CHECK(line == "t,mean_p,var_p,dmean_p_dB");
}
