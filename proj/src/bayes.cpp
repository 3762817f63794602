#include "magnetometry/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "magnetometry/config.hpp"
#include "magnetometry/information.hpp"

namespace magnetometry {

namespace {

bool same_params_except_b(const ModelParams& a, const ModelParams& b)
{
    return a.J == b.J && a.kappa == b.kappa && a.gamma == b.gamma && a.eta == b.eta;
}

std::size_t clamp_used(std::size_t n_used, const PhotocurrentRecord& record)
{
    return std::min(n_used, record.increments.size());
}

std::vector<double> uniform_grid(const PriorInterval& prior, std::size_t points)
{
    if (points < 2) {
        throw std::invalid_argument("posterior grid needs at least 2 points");
    }
    if (!(prior.hi > prior.lo)) {
        throw std::invalid_argument("prior interval must satisfy lo < hi");
    }
    std::vector<double> b(points);
    for (std::size_t k = 0; k < points; ++k) {
        b[k] = prior.lo + (prior.hi - prior.lo) * static_cast<double>(k) / static_cast<double>(points - 1);
    }
    return b;
}

}  // namespace

InferenceModel InferenceModel::from_record(const PhotocurrentRecord& record)
{
    return {record.params, record.grid, record.convention};
}

void InferenceModel::check_compatible(const PhotocurrentRecord& record) const
{
    if (record.convention != convention) {
        throw std::invalid_argument("record convention '" + std::string(to_string(record.convention)) +
                                    "' does not match the inference model's '" +
                                    std::string(to_string(convention)) + "'");
    }
    if (record.grid.n_steps != grid.n_steps || record.grid.t_final != grid.t_final) {
        throw std::invalid_argument("record grid does not match the inference model grid");
    }
    if (!same_params_except_b(record.params, params)) {
        throw std::invalid_argument("record parameters (J, kappa, gamma, eta) differ from the inference model");
    }
    if (record.increments.size() > grid.n_steps) {
        throw std::invalid_argument("record is longer than its grid");
    }
}

double log_likelihood(const InferenceModel& model, const PhotocurrentRecord& record, double B, std::size_t n_used)
{
    model.check_compatible(record);
    const std::size_t n = clamp_used(n_used, record);
    const double dt = model.grid.dt();
    ModelParams p = model.params;
    p.B = B;
    double mean_p = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = model.grid.time(i);
        const double dw = record.increments[i] - current_coefficient(p, t, model.convention) * mean_p * dt;
        acc -= dw * dw / (2.0 * dt);
        mean_p += -B * p.gamma * std::sqrt(jbar(p, t)) * dt + innovation_gain(p, t) * dw;
    }
    if (!std::isfinite(acc)) {
        throw std::runtime_error("non-finite log-likelihood");
    }
    return acc;
}

double log_likelihood(const PhotocurrentRecord& record, double B)
{
    return log_likelihood(InferenceModel::from_record(record), record, B);
}

QuadraticLogLikelihood& QuadraticLogLikelihood::operator+=(const QuadraticLogLikelihood& o)
{
    c0 += o.c0;
    c1 += o.c1;
    c2 += o.c2;
    n_used = std::max(n_used, o.n_used);
    return *this;
}

std::vector<QuadraticLogLikelihood> likelihood_quadratics(const InferenceModel& model,
                                                          const PhotocurrentRecord& record,
                                                          const std::vector<std::size_t>& checkpoints)
{
    model.check_compatible(record);
    if (!std::is_sorted(checkpoints.begin(), checkpoints.end())) {
        throw std::invalid_argument("checkpoints must be non-decreasing");
    }
    if (!checkpoints.empty() && checkpoints.back() > record.increments.size()) {
        throw std::invalid_argument("checkpoint beyond the end of the record");
    }
    const FilterCoefficients fc = filter_coefficients(model.params, model.grid, model.convention);
    const double dt = model.grid.dt();

    std::vector<QuadraticLogLikelihood> out;
    out.reserve(checkpoints.size());
    QuadraticLogLikelihood q;
    // Filter at B = 0 (mean0) and its exact B-derivative (sens).
    double mean0 = 0.0;
    double sens = 0.0;
    std::size_t next = 0;
    const std::size_t n = checkpoints.empty() ? 0 : checkpoints.back();
    for (std::size_t i = 0; i <= n; ++i) {
        while (next < checkpoints.size() && checkpoints[next] == i) {
            q.n_used = i;
            out.push_back(q);
            ++next;
        }
        if (i == n) {
            break;
        }
        const double h = fc.current[i];
        const double r = record.increments[i] - h * mean0 * dt;
        const double d = h * sens * dt;
        q.c0 -= r * r / (2.0 * dt);
        q.c1 += r * d / dt;
        q.c2 -= d * d / (2.0 * dt);
        mean0 += fc.gain[i] * r;
        sens += fc.drift[i] * dt - fc.gain[i] * h * sens * dt;
    }
    return out;
}

PosteriorGrid normalize_posterior(const std::vector<double>& b_values, std::vector<double> log_likelihood,
                                  const PriorInterval& prior, const PosteriorOptions& options)
{
    const std::size_t m = b_values.size();
    if (log_likelihood.size() != m || m < 2) {
        throw std::invalid_argument("log-likelihood and grid sizes differ");
    }
    PosteriorGrid post;
    post.b_values = b_values;
    post.prior = prior;
    post.weights.assign(m, (b_values.back() - b_values.front()) / static_cast<double>(m - 1));
    post.weights.front() *= 0.5;
    post.weights.back() *= 0.5;

    double peak = -std::numeric_limits<double>::infinity();
    for (double v : log_likelihood) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("non-finite log-likelihood on the posterior grid");
        }
        peak = std::max(peak, v);
    }
    post.posterior.resize(m);
    double z = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        post.posterior[k] = std::exp(log_likelihood[k] - peak);
        z += post.weights[k] * post.posterior[k];
    }
    for (double& p : post.posterior) {
        p /= z;
    }
    post.log_likelihood = std::move(log_likelihood);

    if (options.check_boundary) {
        const std::size_t edge = std::max<std::size_t>(1, m / 20);
        double low = 0.0;
        double high = 0.0;
        for (std::size_t k = 0; k < edge; ++k) {
            low += post.weights[k] * post.posterior[k];
            high += post.weights[m - 1 - k] * post.posterior[m - 1 - k];
        }
        if (low > 0.5 || high > 0.5) {
            throw BoundaryError("posterior mass concentrated at the edge of the prior interval; widen the prior");
        }
    }
    return post;
}

namespace {

PosteriorGrid posterior_from_quadratic(const QuadraticLogLikelihood& q, const PriorInterval& prior,
                                       const PosteriorOptions& options, double t, std::size_t n_records)
{
    const std::vector<double> b = uniform_grid(prior, options.points);
    std::vector<double> ll(b.size());
    for (std::size_t k = 0; k < b.size(); ++k) {
        ll[k] = q(b[k]);
    }
    PosteriorGrid post = normalize_posterior(b, std::move(ll), prior, options);
    post.t = t;
    post.n_records = n_records;
    return post;
}

}  // namespace

std::vector<PosteriorGrid> posterior_history(const InferenceModel& model,
                                             const std::vector<PhotocurrentRecord>& records,
                                             const PriorInterval& prior, const std::vector<std::size_t>& checkpoints,
                                             const PosteriorOptions& options)
{
    std::vector<QuadraticLogLikelihood> total(checkpoints.size());
    for (const auto& rec : records) {
        const auto qs = likelihood_quadratics(model, rec, checkpoints);
        for (std::size_t c = 0; c < qs.size(); ++c) {
            total[c] += qs[c];
        }
    }
    std::vector<PosteriorGrid> out;
    out.reserve(checkpoints.size());
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
        out.push_back(posterior_from_quadratic(total[c], prior, options, model.grid.time(checkpoints[c]),
                                               records.size()));
    }
    return out;
}

PosteriorGrid posterior(const InferenceModel& model, const std::vector<PhotocurrentRecord>& records,
                        const PriorInterval& prior, const PosteriorOptions& options, std::size_t n_used)
{
    QuadraticLogLikelihood total;
    std::size_t used = records.empty() ? 0 : static_cast<std::size_t>(-1);
    for (const auto& rec : records) {
        used = std::min(used, clamp_used(n_used, rec));
    }
    for (const auto& rec : records) {
        const auto qs = likelihood_quadratics(model, rec, {used});
        total += qs.front();
    }
    return posterior_from_quadratic(total, prior, options, model.grid.time(used), records.size());
}

EstimateSummary estimate(const PosteriorGrid& post, double fisher)
{
    std::size_t support = 0;
    double mean = 0.0;
    for (std::size_t k = 0; k < post.b_values.size(); ++k) {
        const double w = post.weights[k] * post.posterior[k];
        if (w > 0.0) {
            ++support;
        }
        mean += w * post.b_values[k];
    }
    if (support < 2) {
        throw std::runtime_error("posterior is degenerate (fewer than 2 grid points carry mass)");
    }
    double var = 0.0;
    for (std::size_t k = 0; k < post.b_values.size(); ++k) {
        const double d = post.b_values[k] - mean;
        var += post.weights[k] * post.posterior[k] * d * d;
    }
    EstimateSummary s;
    s.t = post.t;
    s.mean = mean;
    s.sd = std::sqrt(var);
    if (fisher > 0.0) {
        s.sd_crb = 1.0 / std::sqrt(fisher);
        s.ratio = s.sd / s.sd_crb;
    } else {
        s.sd_crb = std::numeric_limits<double>::infinity();
        s.ratio = std::numeric_limits<double>::quiet_NaN();
    }
    return s;
}

EstimateSummary estimate(const PosteriorGrid& post, const ModelParams& params)
{
    return estimate(post, fisher_record_closed(params, post.t));
}

void write_posterior_csv(std::ostream& out, const PosteriorGrid& post)
{
    for (std::size_t k = 0; k < post.b_values.size(); ++k) {
        out << format_double(post.t) << ',' << format_double(post.b_values[k]) << ','
            << format_double(post.posterior[k]) << '\n';
    }
}

void write_estimate_csv_header(std::ostream& out) { out << "kappa_t,mean,sd,sd_crb,ratio\n"; }

void write_estimate_csv_row(std::ostream& out, double kappa_t, const EstimateSummary& s)
{
    out << format_double(kappa_t) << ',' << format_double(s.mean) << ',' << format_double(s.sd) << ','
        << format_double(s.sd_crb) << ',' << format_double(s.ratio) << '\n';
}

}  // namespace magnetometry
