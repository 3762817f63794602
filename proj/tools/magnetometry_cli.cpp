// magnetometry: information sweeps, record simulation, Bayesian estimation
// and oracle verification for continuously monitored spin magnetometers.

#include <CLI11.hpp>

#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "magnetometry/cli.hpp"

namespace {

constexpr int kUsageError = 1;
constexpr int kVerifyFailure = 2;

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Continuous-monitoring magnetometry toolkit"};
    app.require_subcommand(1);
    // Global options may follow the subcommand name.
    app.fallthrough();

    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (created if missing)");
    app.add_option("--seed", seed, "base RNG seed (overrides the config)");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    auto* sweep = app.add_subcommand("info-sweep", "information quantities over J x kappa t x eta");
    auto* simulate = app.add_subcommand("simulate", "generate photocurrent records");
    auto* estimate = app.add_subcommand("estimate", "posterior and CRB ratio from record files");
    std::vector<std::string> record_files;
    estimate->add_option("records", record_files, "record files")->check(CLI::ExistingFile);
    auto* verify = app.add_subcommand("verify", "closed-form vs numeric equivalence checks");
    std::string fault;
    verify->add_option("--inject-fault", fault, "negative control: fisher_closed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    using namespace magnetometry;
    try {
        const KeyValueConfig cfg = config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
        ExperimentSpec spec = ExperimentSpec::from_config(cfg);
        if (seed) {
            spec.seed = *seed;
        }
        if (!fault.empty()) {
            spec.inject_fault = fault;
        }
        spec.threads = threads;
        spec.out_dir = out_dir;
        std::filesystem::create_directories(spec.out_dir);
        spec.validate();

        if (sweep->parsed()) {
            std::cout << cmd_info_sweep(spec).string() << '\n';
        } else if (simulate->parsed()) {
            for (const auto& p : cmd_simulate(spec)) {
                std::cout << p.string() << '\n';
            }
        } else if (estimate->parsed()) {
            const std::vector<std::filesystem::path> paths(record_files.begin(), record_files.end());
            const EstimateOutputs out = cmd_estimate(spec, paths);
            std::cout << out.posterior_csv.string() << '\n' << out.estimate_csv.string() << '\n';
        } else if (verify->parsed()) {
            const VerifyReport report = cmd_verify(spec);
            for (const auto& row : report.rows) {
                std::cout << (row.pass() ? "pass " : "FAIL ") << row.check << " residual=" << row.residual
                          << " threshold=" << row.threshold << '\n';
            }
            std::cout << report.csv.string() << '\n';
            return report.passed() ? 0 : kVerifyFailure;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    }
    return 0;
}
