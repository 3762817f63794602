#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "magnetometry/cli.hpp"
#include "magnetometry/information.hpp"
#include "magnetometry/trajectories.hpp"

using namespace magnetometry;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("magnetometry_test_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string without_timestamp(const std::string& text)
{
    std::istringstream in(text);
    std::string out, line;
    while (std::getline(in, line)) {
        if (line.rfind(kTimestampPrefix, 0) != 0) {
            out += line + '\n';
        }
    }
    return out;
}

std::vector<std::string> data_lines(const std::string& text)
{
    std::istringstream in(text);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') {
            out.push_back(line);
        }
    }
    return out;
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(MAGNETOMETRY_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("spec round trip and validation")
{
    ExperimentSpec spec;
    spec.params = {123.0, 2.0, 0.5, 0.3, 1e-3};
    spec.J_values = {1, 1e3};
    spec.estimate_mode = "joint";
    spec.prior = {-0.02, 0.03};
    std::stringstream ss;
    spec.to_config().write(ss);
    const ExperimentSpec back = ExperimentSpec::from_config(KeyValueConfig::parse(ss));
    CHECK(back.params.J == 123.0);
    CHECK(back.params.eta == 0.3);
    CHECK(back.J_values == spec.J_values);
    CHECK(back.estimate_mode == "joint");
    CHECK(back.prior.hi == 0.03);

    ExperimentSpec bad;
    bad.J_values.clear();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ExperimentSpec{};
    bad.eta_values = {1.5};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ExperimentSpec{};
    bad.estimate_mode = "median";
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("info-sweep")
{
    SUBCASE("a single point matches the library")
    {
        ExperimentSpec spec;
        spec.out_dir = scratch_dir("single");
        spec.J_values = {1e4};
        spec.kappa_t_values = {0.3};
        spec.eta_values = {0.7};
        const auto path = cmd_info_sweep(spec);
        std::ostringstream expect;
        write_information_csv_row(expect, effective_qfi(spec.params.with_J(1e4).with_eta(0.7), 0.3));
        const auto lines = data_lines(slurp(path));
        REQUIRE(lines.size() == 2);
        CHECK(lines[1] + '\n' == expect.str());
    }
    SUBCASE("output is deterministic apart from the timestamp and thread count")
    {
        ExperimentSpec spec;
        spec.out_dir = scratch_dir("det1");
        const std::string a = slurp(cmd_info_sweep(spec));
        spec.out_dir = scratch_dir("det2");
        spec.threads = 3;
        const std::string b = slurp(cmd_info_sweep(spec));
        CHECK(a.find("# workflow = info-sweep") != std::string::npos);
        CHECK(a.find("# J = 10000") != std::string::npos);
        // The thread count is not part of the provenance.
        CHECK(without_timestamp(a) == without_timestamp(b));
    }
    SUBCASE("decade sweep shows both slope regimes")
    {
        ExperimentSpec spec;
        spec.J_values.clear();
        for (int k = 0; k <= 8; ++k) {
            spec.J_values.push_back(std::pow(10.0, k));
        }
        spec.eta_values = {1.0};
        const auto rows = info_sweep_rows(spec);
        REQUIRE(rows.size() == 27);
        // kappa t = 1 rows are the last nine; slope between the top decades.
        const double top = std::log10(rows[26].Q_tilde / rows[25].Q_tilde);
        const double low = std::log10(rows[1].Q_tilde / rows[0].Q_tilde);
        CHECK(top == doctest::Approx(2.0).epsilon(0.02));
        CHECK(low == doctest::Approx(1.0).epsilon(0.05));
    }
    SUBCASE("enhancement at every non-zero efficiency")
    {
        ExperimentSpec spec;
        spec.eta_values = {0.1, 0.25, 0.5, 0.75, 1.0};
        spec.kappa_t_values = {1.0};
        spec.J_values = {1e8, 1e9};
        for (const auto& r : info_sweep_rows(spec)) {
            CHECK(r.Q_tilde > r.K1 * r.J * 1.5);
        }
    }
}

TEST_CASE("simulate")
{
    ExperimentSpec spec;
    spec.grid = TimeGrid(0.2, 500);
    spec.seed = 31;
    spec.n_records = 2;
    spec.out_dir = scratch_dir("sim1");
    const auto a = cmd_simulate(spec);
    REQUIRE(a.size() == 2);
    CHECK(a[1].filename() == "record_31_1.txt");
    spec.out_dir = scratch_dir("sim2");
    const auto b = cmd_simulate(spec);
    CHECK(slurp(a[0]) == slurp(b[0]));
    CHECK(slurp(a[1]) != slurp(a[0]));

    spec.params.eta = 0.0;
    spec.n_records = 1;
    spec.out_dir = scratch_dir("sim3");
    const auto c = cmd_simulate(spec);
    CHECK(slurp(c[0]).find("informative = false") != std::string::npos);
    CHECK_FALSE(load_record(c[0]).informative());
}

TEST_CASE("estimate")
{
    ExperimentSpec spec;
    spec.grid = TimeGrid(1.0, 5000);
    spec.checkpoints = 10;
    spec.n_records = 3;
    spec.out_dir = scratch_dir("est");
    const auto recs = cmd_simulate(spec);

    SUBCASE("per-record summaries")
    {
        const auto out = cmd_estimate(spec, recs);
        REQUIRE(out.summaries.size() == 10);
        CHECK(out.summaries.back().t == doctest::Approx(1.0));
        CHECK(out.summaries.back().ratio > 0.5);
        CHECK(out.summaries.back().ratio < 2.0);
        const std::string text = slurp(out.estimate_csv);
        CHECK(text.find("# records = 3") != std::string::npos);
        CHECK(data_lines(text).size() == 11);
        CHECK(data_lines(slurp(out.posterior_csv)).size() == 1 + 10 * spec.grid_points);
    }
    SUBCASE("joint posterior is narrower than a single record's")
    {
        const auto single = cmd_estimate(spec, {recs[0]});
        spec.estimate_mode = "joint";
        const auto joint = cmd_estimate(spec, recs);
        CHECK(joint.summaries.back().sd < single.summaries.back().sd);
    }
    SUBCASE("no records echoes the prior")
    {
        const auto out = cmd_estimate(spec, {});
        for (const auto& s : out.summaries) {
            CHECK(std::isnan(s.ratio));
            CHECK(s.sd == doctest::Approx(0.02 / std::sqrt(12.0)).epsilon(1e-4));
        }
        CHECK(slurp(out.estimate_csv).find(",nan\n") != std::string::npos);
    }
    SUBCASE("mismatched records are rejected")
    {
        ExperimentSpec other = spec;
        other.grid = TimeGrid(1.0, 2500);
        other.n_records = 1;
        other.seed = 99;
        const auto odd = cmd_simulate(other);
        CHECK_THROWS_AS(cmd_estimate(spec, {recs[0], odd[0]}), std::invalid_argument);
    }
}

TEST_CASE("verify")
{
    ExperimentSpec spec;
    spec.out_dir = scratch_dir("verify");
    const auto good = cmd_verify(spec);
    CHECK(good.passed());
    CHECK(good.rows.size() >= 8);
    for (const auto& row : good.rows) {
        CHECK_MESSAGE(row.pass(), row.check);
    }
    const std::string csv = slurp(good.csv);
    CHECK(csv.find("check,residual,threshold,verdict\n") != std::string::npos);
    CHECK(csv.find("qtilde_equals_qbar_eta1,") != std::string::npos);

    spec.inject_fault = "fisher_closed";
    const auto bad = cmd_verify(spec);
    CHECK_FALSE(bad.passed());
}

TEST_CASE("command-line exit codes")
{
    const fs::path dir = scratch_dir("exit");
    CHECK(run_cli("info-sweep --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "info_sweep.csv"));
    CHECK(run_cli("no-such-command") == 1);
    CHECK(run_cli("info-sweep --config /nonexistent.cfg") == 1);

    const fs::path cfg = dir / "bad.cfg";
    std::ofstream(cfg) << "eta_values = 2\n";
    CHECK(run_cli("info-sweep --config " + cfg.string() + " --out " + dir.string()) == 1);
    CHECK(run_cli("verify --inject-fault fisher_closed --out " + dir.string()) == 2);
}
