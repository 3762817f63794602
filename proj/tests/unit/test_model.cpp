#include <doctest.h>

#include <cmath>
#include <sstream>

#include "magnetometry/config.hpp"
#include "magnetometry/model.hpp"
#include "oracles.hpp"

using namespace magnetometry;

TEST_CASE("jbar decays from J")
{
    const ModelParams p{1e4, 1.0, 1.0, 1.0, 0.0};
    CHECK(jbar(p, 0.0) == 1e4);
    CHECK(jbar(p, 2.0 * std::log(2.0)) == doctest::Approx(5e3).epsilon(1e-14));

    // d<Jx>/dt = -(kappa/2)<Jx> integrated with RK4.
    const ModelParams q{100.0, 1.0, 1.0, 1.0, 0.0};
    double x = 100.0;
    const int n = 1000;
    const double h = 1.0 / n;
    for (int i = 0; i < n; ++i) {
        const double k1 = -0.5 * x;
        const double k2 = -0.5 * (x + h / 2 * k1);
        const double k3 = -0.5 * (x + h / 2 * k2);
        const double k4 = -0.5 * (x + h * k3);
        x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    CHECK(jbar(q, 1.0) == doctest::Approx(x).epsilon(1e-12));
    CHECK(jbar(q, 1.0) == doctest::Approx(60.653065971263).epsilon(1e-12));
}

TEST_CASE("jbar rejects negative time and is log-linear")
{
    const ModelParams p{50.0, 3.0, 1.0, 1.0, 0.0};
    CHECK_THROWS_AS(jbar(p, -1e-9), std::invalid_argument);
    oracle::Gen gen(11);
    for (int i = 0; i < 50; ++i) {
        const double t1 = gen.uniform(0.0, 2.0);
        const double t2 = t1 + gen.uniform(1e-3, 1.0);
        CHECK(jbar(p, t2) < jbar(p, t1));
        const double slope = (std::log(jbar(p, t2)) - std::log(jbar(p, t1))) / (t2 - t1);
        CHECK(slope == doctest::Approx(-p.kappa / 2).epsilon(1e-10));
    }
}

TEST_CASE("moment matrices")
{
    SUBCASE("unmonitored has zero measurement matrix")
    {
        const auto m = moment_matrices({10.0, 1.0, 1.0, 0.0, 0.3}, 0.7);
        CHECK(m.M.isZero(0.0));
    }
    SUBCASE("t = 0, J = kappa = eta = 1")
    {
        const auto m = moment_matrices({1.0, 1.0, 1.0, 1.0, 0.0}, 0.0);
        CHECK(m.M(1, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    }
    SUBCASE("J = 1e4, kappa t = 1, eta = 0.5")
    {
        const ModelParams p{1e4, 1.0, 1.0, 0.5, 0.0};
        const auto m = moment_matrices(p, 1.0);
        CHECK(m.M(1, 0) == doctest::Approx(std::sqrt(2 * 0.5 * 1e4 * std::exp(-0.5))).epsilon(1e-14));
        CHECK(m.M(1, 0) == doctest::Approx(std::sqrt(2 * 0.5 * jbar(p, 1.0))).epsilon(1e-14));
    }
    SUBCASE("layout and eta scaling")
    {
        const ModelParams p{40.0, 2.0, 3.0, 0.25, 0.01};
        const ModelParams p2 = p.with_eta(0.5);
        const auto a = moment_matrices(p, 0.3);
        const auto b = moment_matrices(p2, 0.3);
        CHECK(a.D(0, 0) == doctest::Approx(2 * p.kappa * jbar(p, 0.3)));
        CHECK(a.D(0, 1) == 0.0);
        CHECK(a.D(1, 1) == 0.0);
        CHECK(a.M(0, 0) == 0.0);
        CHECK(a.M(0, 1) == 0.0);
        CHECK(a.M(1, 1) == 0.0);
        CHECK(a.u(0) == 0.0);
        CHECK(a.u(1) == doctest::Approx(-p.gamma * p.B * std::sqrt(jbar(p, 0.3))));
        CHECK(b.M(1, 0) == doctest::Approx(std::sqrt(2.0) * a.M(1, 0)).epsilon(1e-14));
        CHECK(b.D == a.D);
        CHECK(b.u == a.u);
    }
}

TEST_CASE("validity flags are advisory")
{
    const ModelParams p{1e4, 1.0, 1.0, 1.0, 0.01};
    CHECK(validity_report(p, 0.5).gaussian_ok);
    CHECK_FALSE(validity_report(p, 3.0).gaussian_ok);
    const auto r = validity_report(p, 1.0);
    CHECK(r.small_field_ok);
    CHECK(r.gamma_b_t == doctest::Approx(0.01));
    CHECK_FALSE(validity_report(p, 3.0, {5.0, 0.001}).small_field_ok);
    CHECK(validity_report(p, 3.0, {5.0, 0.1}).gaussian_ok);
}

TEST_CASE("parameter and grid validation")
{
    CHECK_THROWS_AS(ModelParams({0.0, 1.0, 1.0, 1.0, 0.0}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(ModelParams({1.0, -1.0, 1.0, 1.0, 0.0}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(ModelParams({1.0, 1.0, 1.0, 1.5, 0.0}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(ModelParams({1.0, 1.0, NAN, 1.0, 0.0}).validate(), std::invalid_argument);
    CHECK_NOTHROW(ModelParams({1.0, 1.0, -2.0, 0.0, 0.0}).validate());
    CHECK_THROWS_AS(TimeGrid(1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(0.0, 10), std::invalid_argument);
    const TimeGrid g(2.0, 8);
    CHECK(g.dt() == 0.25);
    CHECK(g.time(8) == 2.0);
}

TEST_CASE("recommended step count")
{
    const ModelParams p{1e4, 1.0, 1.0, 1.0, 0.0};
    const std::size_t n = recommended_steps(p, 1.0);
    const double dt = 1.0 / static_cast<double>(n);
    CHECK(std::max(p.kappa * dt, 4 * p.eta * p.kappa * p.J * dt * 0.25) <= 1e-3);
    CHECK(recommended_steps(p, 1.0, 1e-2) * 10 >= n - 10);
    CHECK(recommended_steps({1.0, 1.0, 1.0, 0.0, 0.0}, 1e-9) == 1);
}

TEST_CASE("config round trip is exact")
{
    RunConfig rc;
    rc.params = {12345.678901234567, 0.1, 1.0 / 3.0, 0.3, -1e-3};
    rc.grid = TimeGrid(0.7, 9999);
    rc.seed = 18446744073709551615ull;
    KeyValueConfig cfg;
    rc.to_config(cfg);
    std::stringstream ss;
    cfg.write(ss);
    const RunConfig back = RunConfig::from_config(KeyValueConfig::parse(ss));
    CHECK(back.params.J == rc.params.J);
    CHECK(back.params.gamma == rc.params.gamma);
    CHECK(back.params.B == rc.params.B);
    CHECK(back.grid.t_final == rc.grid.t_final);
    CHECK(back.grid.n_steps == rc.grid.n_steps);
    CHECK(back.seed == rc.seed);
}

TEST_CASE("config parsing")
{
    std::stringstream ss("# comment\nJ = 10  # trailing\n\nlist = 1, 2.5 ,1e3\nname = standard\n");
    const auto cfg = KeyValueConfig::parse(ss);
    CHECK(cfg.get_double("J") == 10.0);
    CHECK(cfg.get_list("list") == std::vector<double>{1.0, 2.5, 1e3});
    CHECK(cfg.get_string("name") == "standard");
    CHECK(cfg.get_double("absent", 4.0) == 4.0);
    CHECK_THROWS_AS(cfg.get_double("absent"), std::invalid_argument);
    CHECK_THROWS_AS(cfg.get_double("name"), std::invalid_argument);
    CHECK_THROWS_AS(cfg.get_u64("list"), std::invalid_argument);

    std::stringstream bad("J 10\n");
    CHECK_THROWS_AS(KeyValueConfig::parse(bad), std::invalid_argument);
    std::stringstream missing("J = 1\nkappa = 1\n");
    CHECK_THROWS_AS(RunConfig::from_config(KeyValueConfig::parse(missing)), std::invalid_argument);
}
