#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "magnetometry/model.hpp"

namespace magnetometry {

/// Flat `key = value` configuration.
///
/// One entry per line; `#` starts a comment; blank lines are ignored.
/// Values are kept as strings and converted on access. Lists are
/// comma-separated. Writing uses 17 significant digits so doubles
/// round-trip exactly.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in);
    static KeyValueConfig load(const std::filesystem::path& path);

    void write(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, std::uint64_t value);
    void set(const std::string& key, const std::vector<double>& values);

    std::string get_string(const std::string& key) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::vector<double> get_list(const std::string& key) const;
    std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// Model parameters plus time grid and seed, as stored in a config file
/// under the keys J, kappa, gamma, eta, B, t_final, n_steps, seed.
struct RunConfig {
    ModelParams params;
    TimeGrid grid;
    std::uint64_t seed = 0;

    static RunConfig from_config(const KeyValueConfig& cfg);
    void to_config(KeyValueConfig& cfg) const;
};

std::string format_double(double value);

}  // namespace magnetometry
