#include "magnetometry/cli.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "magnetometry/parallel.hpp"
#include "magnetometry/spin_oracle.hpp"
#include "magnetometry/trajectories.hpp"

namespace magnetometry {

namespace {

std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return out;
}

std::string utc_timestamp()
{
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Step counts at which posterior snapshots are taken: n * k / count.
std::vector<std::size_t> checkpoint_steps(std::size_t n_steps, std::size_t count)
{
    std::vector<std::size_t> steps;
    for (std::size_t k = 1; k <= count; ++k) {
        const std::size_t s = (n_steps * k + count / 2) / count;
        if (s > 0 && (steps.empty() || steps.back() != s)) {
            steps.push_back(s);
        }
    }
    return steps;
}

double max_rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

ExperimentSpec ExperimentSpec::from_config(const KeyValueConfig& cfg)
{
    ExperimentSpec s;
    s.params.J = cfg.get_double("J", s.params.J);
    s.params.kappa = cfg.get_double("kappa", s.params.kappa);
    s.params.gamma = cfg.get_double("gamma", s.params.gamma);
    s.params.eta = cfg.get_double("eta", s.params.eta);
    s.params.B = cfg.get_double("B", s.params.B);
    s.grid.t_final = cfg.get_double("t_final", s.grid.t_final);
    s.grid.n_steps = cfg.get_u64("n_steps", s.grid.n_steps);
    s.seed = cfg.get_u64("seed", s.seed);
    s.J_values = cfg.get_list("J_values", s.J_values);
    s.kappa_t_values = cfg.get_list("kappa_t_values", s.kappa_t_values);
    s.eta_values = cfg.get_list("eta_values", s.eta_values);
    s.n_records = cfg.get_u64("n_records", s.n_records);
    s.prior.lo = cfg.get_double("prior_lo", s.prior.lo);
    s.prior.hi = cfg.get_double("prior_hi", s.prior.hi);
    s.grid_points = cfg.get_u64("grid_points", s.grid_points);
    s.checkpoints = cfg.get_u64("checkpoints", s.checkpoints);
    if (cfg.contains("convention")) {
        s.convention = convention_from_string(cfg.get_string("convention"));
    }
    if (cfg.contains("estimate_mode")) {
        s.estimate_mode = cfg.get_string("estimate_mode");
    }
    if (cfg.contains("inject_fault")) {
        s.inject_fault = cfg.get_string("inject_fault");
    }
    return s;
}

KeyValueConfig ExperimentSpec::to_config() const
{
    KeyValueConfig cfg;
    RunConfig{params, grid, seed}.to_config(cfg);
    cfg.set("J_values", J_values);
    cfg.set("kappa_t_values", kappa_t_values);
    cfg.set("eta_values", eta_values);
    cfg.set("n_records", static_cast<std::uint64_t>(n_records));
    cfg.set("prior_lo", prior.lo);
    cfg.set("prior_hi", prior.hi);
    cfg.set("grid_points", static_cast<std::uint64_t>(grid_points));
    cfg.set("checkpoints", static_cast<std::uint64_t>(checkpoints));
    cfg.set("convention", std::string(to_string(convention)));
    cfg.set("estimate_mode", estimate_mode);
    cfg.set("inject_fault", inject_fault);
    return cfg;
}

void ExperimentSpec::validate() const
{
    params.validate();
    grid.validate();
    if (J_values.empty() || kappa_t_values.empty() || eta_values.empty()) {
        throw std::invalid_argument("sweep lists must be non-empty");
    }
    for (double j : J_values) {
        if (!(j > 0.0) || !std::isfinite(j)) {
            throw std::invalid_argument("J_values must be positive");
        }
    }
    for (double x : kappa_t_values) {
        if (!(x >= 0.0) || !std::isfinite(x)) {
            throw std::invalid_argument("kappa_t_values must be non-negative");
        }
    }
    for (double e : eta_values) {
        if (!(e >= 0.0 && e <= 1.0)) {
            throw std::invalid_argument("eta_values must lie in [0, 1]");
        }
    }
    if (n_records < 1) {
        throw std::invalid_argument("n_records must be at least 1");
    }
    if (!(prior.hi > prior.lo)) {
        throw std::invalid_argument("prior_lo must be below prior_hi");
    }
    if (grid_points < 2 || checkpoints < 1) {
        throw std::invalid_argument("grid_points >= 2 and checkpoints >= 1 required");
    }
    if (estimate_mode != "per_record" && estimate_mode != "joint") {
        throw std::invalid_argument("estimate_mode must be per_record or joint");
    }
    if (inject_fault != "none" && inject_fault != "fisher_closed") {
        throw std::invalid_argument("inject_fault must be none or fisher_closed");
    }
}

void write_provenance(std::ostream& out, const ExperimentSpec& spec, const std::string& workflow)
{
    out << kTimestampPrefix << utc_timestamp() << '\n';
    out << "# workflow = " << workflow << '\n';
    std::ostringstream cfg;
    spec.to_config().write(cfg);
    std::istringstream lines(cfg.str());
    std::string line;
    while (std::getline(lines, line)) {
        out << "# " << line << '\n';
    }
}

std::vector<InformationReport> info_sweep_rows(const ExperimentSpec& spec)
{
    spec.validate();
    struct Point {
        double eta, kappa_t, J;
    };
    std::vector<Point> points;
    for (double eta : spec.eta_values) {
        for (double kt : spec.kappa_t_values) {
            for (double J : spec.J_values) {
                points.push_back({eta, kt, J});
            }
        }
    }
    std::vector<InformationReport> rows(points.size());
    parallel_for(points.size(), spec.threads, [&](std::size_t i) {
        ModelParams p = spec.params;
        p.J = points[i].J;
        p.eta = points[i].eta;
        rows[i] = effective_qfi(p, points[i].kappa_t / p.kappa);
    });
    return rows;
}

std::filesystem::path cmd_info_sweep(const ExperimentSpec& spec)
{
    const auto rows = info_sweep_rows(spec);
    const auto path = spec.out_dir / "info_sweep.csv";
    auto out = open_output(path);
    write_provenance(out, spec, "info-sweep");
    write_information_csv_header(out);
    for (const auto& r : rows) {
        write_information_csv_row(out, r);
    }
    return path;
}

std::vector<std::filesystem::path> cmd_simulate(const ExperimentSpec& spec)
{
    spec.validate();
    const auto records = batch_simulate(spec.params, spec.grid, spec.n_records, spec.seed, spec.convention,
                                        spec.threads);
    std::vector<std::filesystem::path> paths;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto path = spec.out_dir / ("record_" + std::to_string(spec.seed) + "_" + std::to_string(i) + ".txt");
        save_record(path, records[i]);
        paths.push_back(path);
    }
    return paths;
}

EstimateOutputs cmd_estimate(const ExperimentSpec& spec, const std::vector<std::filesystem::path>& record_paths)
{
    spec.validate();
    PosteriorOptions opts;
    opts.points = spec.grid_points;

    // Without records the spec supplies the model and grid.
    InferenceModel model{spec.params, spec.grid, spec.convention};
    std::vector<PhotocurrentRecord> records;
    for (const auto& p : record_paths) {
        records.push_back(load_record(p));
        if (records.size() == 1) {
            model = InferenceModel::from_record(records.front());
        }
        model.check_compatible(records.back());
    }
    const std::vector<std::size_t> steps = checkpoint_steps(model.grid.n_steps, spec.checkpoints);
    const double fisher_scale = spec.estimate_mode == "joint" ? static_cast<double>(records.size()) : 1.0;

    std::vector<PosteriorGrid> snapshots;
    std::vector<EstimateSummary> summaries(steps.size());
    if (records.empty() || spec.estimate_mode == "joint") {
        snapshots = posterior_history(model, records, spec.prior, steps, opts);
        for (std::size_t c = 0; c < steps.size(); ++c) {
            summaries[c] = estimate(snapshots[c], fisher_scale * fisher_record_closed(model.params, snapshots[c].t));
            if (records.empty()) {
                summaries[c].ratio = std::numeric_limits<double>::quiet_NaN();
            }
        }
    } else {
        // Average per-record summaries; the first record's posterior is kept
        // as the single-experiment heatmap.
        const double n = static_cast<double>(records.size());
        for (std::size_t r = 0; r < records.size(); ++r) {
            const auto hist = posterior_history(model, {records[r]}, spec.prior, steps, opts);
            for (std::size_t c = 0; c < steps.size(); ++c) {
                const EstimateSummary s = estimate(hist[c], fisher_record_closed(model.params, hist[c].t));
                summaries[c].t = s.t;
                summaries[c].sd_crb = s.sd_crb;
                summaries[c].mean += s.mean / n;
                summaries[c].sd += s.sd / n;
                summaries[c].ratio += s.ratio / n;
            }
            if (r == 0) {
                snapshots = hist;
            }
        }
    }

    EstimateOutputs outputs;
    outputs.summaries = summaries;
    outputs.posterior_csv = spec.out_dir / "posterior.csv";
    outputs.estimate_csv = spec.out_dir / "estimate.csv";
    {
        auto out = open_output(outputs.posterior_csv);
        write_provenance(out, spec, "estimate");
        out << "# records = " << records.size() << '\n';
        out << "t,B,density\n";
        for (const auto& snap : snapshots) {
            write_posterior_csv(out, snap);
        }
    }
    {
        auto out = open_output(outputs.estimate_csv);
        write_provenance(out, spec, "estimate");
        out << "# records = " << records.size() << ", mode = " << spec.estimate_mode << '\n';
        write_estimate_csv_header(out);
        for (const auto& s : summaries) {
            write_estimate_csv_row(out, model.params.kappa_t(s.t), s);
        }
    }
    return outputs;
}

bool VerifyReport::passed() const
{
    return std::all_of(rows.begin(), rows.end(), [](const VerifyRow& r) { return r.pass(); });
}

VerifyReport cmd_verify(const ExperimentSpec& spec)
{
    spec.validate();
    const double fault = spec.inject_fault == "fisher_closed" ? 1.0 + 1e-4 : 1.0;
    const std::vector<double> etas{0.1, 0.5, 1.0};
    const std::vector<double> Js{10.0, 1e3, 1e6};
    const std::vector<double> kts{0.01, 0.1, 1.0};
    ModelParams base = spec.params;

    double f_res = 0.0;
    double q_res = 0.0;
    double var_res = 0.0;
    double equality_res = 0.0;
    double qbar_res = 0.0;
    for (double J : Js) {
        for (double kt : kts) {
            const double t = kt / base.kappa;
            for (double eta : etas) {
                ModelParams p = base;
                p.J = J;
                p.eta = eta;
                const NumericInformation num = information_ode(p, t);
                f_res = std::max(f_res, max_rel(num.F_record, fault * fisher_record_closed(p, t)));
                q_res = std::max(q_res, max_rel(num.Q_cond, qfi_conditional(p, t)));
                var_res = std::max(var_res, max_rel(num.var_p, var_p_closed(p, t)));
            }
            ModelParams p = base;
            p.J = J;
            p.eta = 1.0;
            const double qbar = ultimate_qfi_closed(p, t);
            equality_res = std::max(equality_res, max_rel(effective_qfi(p, t).Q_tilde, qbar));
            qbar_res = std::max(qbar_res, max_rel(ultimate_qfi_ode(p, t), qbar));
        }
    }

    ModelParams small = base;
    small.J = 10.0;
    small.eta = 1.0;
    const double t_small = 1e-4 / small.kappa;
    const double small_t = std::abs(fisher_record_closed(small, t_small) /
                                        (4.0 / 3.0 * small.J * small.J * small.gamma * small.gamma * small.kappa *
                                         t_small * t_small * t_small) -
                                    1.0);

    const SpinAlgebraResiduals alg = spin_algebra_residuals(build_spin_operators(10.0));

    ModelParams spin = base;
    spin.J = 5.0;
    spin.eta = 1.0;
    spin.B = 0.0;
    const TimeGrid spin_grid(0.1 / spin.kappa, 1000);
    const double qbar_fd = ultimate_qfi_finiteJ(spin, spin_grid);
    const double qbar_exact = ultimate_qfi_finiteJ_exact(spin, spin_grid);

    VerifyReport report;
    report.rows = {
        {"fisher_closed_vs_ode", f_res, 1e-6},
        {"qcond_closed_vs_ode", q_res, 1e-6},
        {"variance_closed_vs_ode", var_res, 1e-8},
        {"qtilde_equals_qbar_eta1", equality_res, 1e-10},
        {"qbar_closed_vs_ode", qbar_res, 1e-6},
        {"small_t_law", small_t, 1e-2},
        {"spin_algebra_J10", std::max({alg.commutator, alg.casimir, alg.hermiticity}), 1e-10},
        {"finiteJ_qbar_difference_vs_exact", max_rel(qbar_fd, qbar_exact), 1e-3},
    };
    report.csv = spec.out_dir / "verify.csv";
    auto out = open_output(report.csv);
    write_provenance(out, spec, "verify");
    out << "check,residual,threshold,verdict\n";
    for (const auto& r : report.rows) {
        out << r.check << ',' << format_double(r.residual) << ',' << format_double(r.threshold) << ','
            << (r.pass() ? "pass" : "fail") << '\n';
    }
    return report;
}

}  // namespace magnetometry
