#include <doctest.h>

#include <cmath>
#include <sstream>

#include "magnetometry/gaussian_filter.hpp"
#include "magnetometry/rng.hpp"
#include "magnetometry/trajectories.hpp"

using namespace magnetometry;

namespace {

double mean(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("unmonitored records are pure noise")
{
    const TimeGrid grid(1.0, 20000);
    const auto a = simulate_record({1e4, 1.0, 1.0, 0.0, 0.0}, grid, 7);
    const auto b = simulate_record({1e4, 1.0, 1.0, 0.0, 5e-3}, grid, 7);
    CHECK_FALSE(a.informative());
    CHECK(a.increments == b.increments);

    // Increments are N(0, dt): check the mean and the variance.
    const double dt = grid.dt();
    double s2 = 0.0;
    for (double x : a.increments) {
        s2 += x * x;
    }
    const double n = static_cast<double>(a.increments.size());
    CHECK(std::abs(mean(a.increments)) < 5.0 * std::sqrt(dt / n));
    CHECK(s2 / n / dt == doctest::Approx(1.0).epsilon(5.0 * std::sqrt(2.0 / n)));
}

TEST_CASE("records are deterministic in the seed")
{
    const ModelParams p{100.0, 1.0, 1.0, 0.7, 1e-3};
    const TimeGrid grid(0.5, 500);
    const auto a = simulate_record(p, grid, 123);
    const auto b = simulate_record(p, grid, 123);
    const auto c = simulate_record(p, grid, 124);
    CHECK(a.increments == b.increments);
    CHECK(a.increments != c.increments);
    CHECK(a.increments.size() == grid.n_steps);
    CHECK(a.rng_algorithm == NormalStream::kAlgorithm);

    std::ostringstream sa, sb;
    write_record(sa, a);
    write_record(sb, b);
    CHECK(sa.str() == sb.str());
}

TEST_CASE("batch uses derived seeds and does not depend on threads")
{
    const ModelParams p{100.0, 1.0, 1.0, 1.0, 2e-3};
    const TimeGrid grid(0.3, 300);
    const auto one = batch_simulate(p, grid, 6, 99, CurrentConvention::standard, 1);
    const auto four = batch_simulate(p, grid, 6, 99, CurrentConvention::standard, 4);
    REQUIRE(one.size() == 6);
    for (std::size_t i = 0; i < one.size(); ++i) {
        CHECK(one[i].seed == derive_seed(99, i));
        CHECK(one[i].increments == four[i].increments);
        CHECK(one[i].increments == simulate_record(p, grid, derive_seed(99, i)).increments);
    }
}

TEST_CASE("innovations of the generating filter are white")
{
    // Re-running the filter on its own record at the true field recovers
    // innovations with mean 0 and variance dt.
    const ModelParams p{1e3, 1.0, 1.0, 0.8, 1e-3};
    const TimeGrid grid(1.0, 40000);
    const auto rec = simulate_record(p, grid, 5);
    const auto coeffs = filter_coefficients(p, grid, rec.convention);
    const auto traj = run_filter(p, coeffs, rec.increments);
    const double dt = grid.dt();
    std::vector<double> z(grid.n_steps);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        z[i] = (rec.increments[i] - coeffs.current[i] * traj.mean_p[i] * dt) / std::sqrt(dt);
    }
    const double n = static_cast<double>(z.size());
    double s2 = 0.0, lag = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        s2 += z[i] * z[i];
        if (i > 0) {
            lag += z[i] * z[i - 1];
        }
    }
    CHECK(std::abs(mean(z)) < 5.0 / std::sqrt(n));
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(5.0 * std::sqrt(2.0 / n)));
    CHECK(std::abs(lag / n) < 5.0 / std::sqrt(n));
}

TEST_CASE("record files round trip bit for bit")
{
    const ModelParams p{12.5, 0.9, 1.1, 0.4, -3e-4};
    auto rec = simulate_record(p, TimeGrid(0.2, 64), 2024, CurrentConvention::root_two);
    std::stringstream ss;
    write_record(ss, rec);
    const auto back = read_record(ss);
    CHECK(back.increments == rec.increments);
    CHECK(back.params.J == p.J);
    CHECK(back.params.B == p.B);
    CHECK(back.grid.n_steps == 64);
    CHECK(back.seed == 2024);
    CHECK(back.convention == CurrentConvention::root_two);
    CHECK(back.rng_algorithm == rec.rng_algorithm);
}

TEST_CASE("malformed record files are rejected")
{
    std::stringstream bad_magic("# something else\n");
    CHECK_THROWS_AS(read_record(bad_magic), std::runtime_error);

    const auto rec = simulate_record({10, 1, 1, 1, 0}, TimeGrid(0.1, 4), 1);
    std::ostringstream out;
    write_record(out, rec);
    std::string text = out.str();
    std::stringstream truncated(text.substr(0, text.rfind('\n', text.size() - 2) + 1));
    CHECK_THROWS_AS(read_record(truncated), std::runtime_error);
    CHECK_THROWS_AS(load_record("/nonexistent/record.txt"), std::runtime_error);
}
