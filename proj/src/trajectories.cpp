#include "magnetometry/trajectories.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "magnetometry/config.hpp"
#include "magnetometry/parallel.hpp"
#include "magnetometry/rng.hpp"

namespace magnetometry {

PhotocurrentRecord simulate_record(const ModelParams& params, const TimeGrid& grid, std::uint64_t seed,
                                   CurrentConvention convention)
{
    const FilterCoefficients fc = filter_coefficients(params, grid, convention);
    NormalStream rng(seed);

    PhotocurrentRecord rec;
    rec.grid = grid;
    rec.params = params;
    rec.seed = seed;
    rec.convention = convention;
    rec.rng_algorithm = NormalStream::kAlgorithm;
    rec.increments.resize(grid.n_steps);

    const double dt = grid.dt();
    const double sqrt_dt = std::sqrt(dt);
    double mean_p = 0.0;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        const double dw = sqrt_dt * rng.normal();
        rec.increments[i] = fc.current[i] * mean_p * dt + dw;
        mean_p += params.B * fc.drift[i] * dt + fc.gain[i] * dw;
    }
    return rec;
}

std::vector<PhotocurrentRecord> batch_simulate(const ModelParams& params, const TimeGrid& grid,
                                               std::size_t n_records, std::uint64_t seed_base,
                                               CurrentConvention convention, unsigned threads)
{
    if (n_records < 1) {
        throw std::invalid_argument("batch_simulate needs at least one record");
    }
    std::vector<PhotocurrentRecord> out(n_records);
    parallel_for(n_records, threads, [&](std::size_t i) {
        out[i] = simulate_record(params, grid, derive_seed(seed_base, i), convention);
    });
    return out;
}

void write_record(std::ostream& out, const PhotocurrentRecord& record)
{
    KeyValueConfig header;
    RunConfig{record.params, record.grid, record.seed}.to_config(header);
    header.set("convention", std::string(to_string(record.convention)));
    header.set("rng", record.rng_algorithm);
    header.set("informative", std::string(record.informative() ? "true" : "false"));
    header.set("increments", static_cast<std::uint64_t>(record.increments.size()));

    out << "# " << kRecordFormat << '\n';
    header.write(out);
    out << "---\n";
    for (double v : record.increments) {
        out << format_double(v) << '\n';
    }
}

PhotocurrentRecord read_record(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || line != std::string("# ") + kRecordFormat) {
        throw std::runtime_error("not a record file (expected '# " + std::string(kRecordFormat) + "')");
    }
    std::stringstream header_text;
    bool separator = false;
    while (std::getline(in, line)) {
        if (line == "---") {
            separator = true;
            break;
        }
        header_text << line << '\n';
    }
    if (!separator) {
        throw std::runtime_error("record file has no '---' separator");
    }
    const KeyValueConfig header = KeyValueConfig::parse(header_text);
    const RunConfig rc = RunConfig::from_config(header);

    PhotocurrentRecord rec;
    rec.params = rc.params;
    rec.grid = rc.grid;
    rec.seed = rc.seed;
    rec.convention = convention_from_string(header.get_string("convention"));
    rec.rng_algorithm = header.get_string("rng");
    const std::uint64_t count = header.get_u64("increments");
    if (count > rec.grid.n_steps) {
        throw std::runtime_error("record holds more increments than grid steps");
    }
    rec.increments.reserve(count);
    while (rec.increments.size() < count && std::getline(in, line)) {
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(line.c_str(), &end);
        if (end == line.c_str() || errno == ERANGE || !std::isfinite(v)) {
            throw std::runtime_error("bad increment value '" + line + "'");
        }
        rec.increments.push_back(v);
    }
    if (rec.increments.size() != count) {
        throw std::runtime_error("record file truncated");
    }
    return rec;
}

void save_record(const std::filesystem::path& path, const PhotocurrentRecord& record)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write record " + path.string());
    }
    write_record(out, record);
}

PhotocurrentRecord load_record(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open record " + path.string());
    }
    return read_record(in);
}

}  // namespace magnetometry
