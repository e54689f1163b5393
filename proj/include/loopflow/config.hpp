#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "loopflow/core.hpp"

namespace loopflow {

/// `key = value` lines; `#` starts a comment. Keys may appear once.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
    std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;
    Date get_date(const std::string& key, Date fallback) const;

    /// Throws naming the first key that is neither in `known` nor under one of `prefixes`.
    void reject_unknown(const std::set<std::string>& known,
                        const std::vector<std::string>& prefixes = {}) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::string origin_;
    std::map<std::string, std::string> values_;
};

}  // namespace loopflow
