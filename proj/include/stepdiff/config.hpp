#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace stepdiff {

/// Flat key = value run configuration. Files use one `key = value` pair per
/// line with `#` comments; unknown keys are rejected. CLI flags override
/// file values, and every run persists its resolved configuration next to
/// its outputs.
class Config {
public:
    Config();

    static Config from_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key) const;
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;

    /// "a,b;c,d;..." integer pair list.
    std::vector<std::pair<int, int>> get_cell_list(const std::string& key) const;
    /// "0-5,8,22-23" hour set; empty string means all hours.
    std::set<int> get_hour_set(const std::string& key) const;
    /// comma-separated ints.
    std::vector<int> get_int_list(const std::string& key) const;

    void write(const std::string& path) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static const std::map<std::string, std::string>& defaults();
    std::map<std::string, std::string> values_;
};

}  // namespace stepdiff
