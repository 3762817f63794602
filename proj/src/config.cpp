#include "magnetometry/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace magnetometry {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE) {
        throw std::invalid_argument("config key '" + key + "': not a number: '" + text + "'");
    }
    return v;
}

}  // namespace

std::string format_double(double value)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

KeyValueConfig KeyValueConfig::parse(std::istream& in)
{
    KeyValueConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        }
        cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file " + path.string());
    }
    return parse(in);
}

void KeyValueConfig::write(std::ostream& out) const
{
    for (const auto& [k, v] : values_) {
        out << k << " = " << v << '\n';
    }
}

void KeyValueConfig::save(const std::filesystem::path& path) const
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write config file " + path.string());
    }
    write(out);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

void KeyValueConfig::set(const std::string& key, double value) { values_[key] = format_double(value); }

void KeyValueConfig::set(const std::string& key, std::uint64_t value) { values_[key] = std::to_string(value); }

void KeyValueConfig::set(const std::string& key, const std::vector<double>& values)
{
    std::string joined;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) {
            joined += ", ";
        }
        joined += format_double(values[i]);
    }
    values_[key] = joined;
}

std::string KeyValueConfig::get_string(const std::string& key) const
{
    const auto it = values_.find(key);
    if (it == values_.end()) {
        throw std::invalid_argument("missing config key '" + key + "'");
    }
    return it->second;
}

double KeyValueConfig::get_double(const std::string& key) const { return parse_double(key, get_string(key)); }

double KeyValueConfig::get_double(const std::string& key, double fallback) const
{
    return contains(key) ? get_double(key) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key) const
{
    const std::string text = trim(get_string(key));
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw std::invalid_argument("config key '" + key + "': not an unsigned integer: '" + text + "'");
    }
    return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const
{
    return contains(key) ? get_u64(key) : fallback;
}

std::vector<double> KeyValueConfig::get_list(const std::string& key) const
{
    std::vector<double> out;
    std::stringstream ss(get_string(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_double(key, item));
    }
    return out;
}

std::vector<double> KeyValueConfig::get_list(const std::string& key, const std::vector<double>& fallback) const
{
    return contains(key) ? get_list(key) : fallback;
}

RunConfig RunConfig::from_config(const KeyValueConfig& cfg)
{
    RunConfig rc;
    rc.params.J = cfg.get_double("J");
    rc.params.kappa = cfg.get_double("kappa");
    rc.params.gamma = cfg.get_double("gamma");
    rc.params.eta = cfg.get_double("eta");
    rc.params.B = cfg.get_double("B", 0.0);
    rc.params.validate();
    rc.grid = TimeGrid(cfg.get_double("t_final"), cfg.get_u64("n_steps"));
    rc.seed = cfg.get_u64("seed", 0);
    return rc;
}

void RunConfig::to_config(KeyValueConfig& cfg) const
{
    cfg.set("J", params.J);
    cfg.set("kappa", params.kappa);
    cfg.set("gamma", params.gamma);
    cfg.set("eta", params.eta);
    cfg.set("B", params.B);
    cfg.set("t_final", grid.t_final);
    cfg.set("n_steps", static_cast<std::uint64_t>(grid.n_steps));
    cfg.set("seed", seed);
}

}  // namespace magnetometry
