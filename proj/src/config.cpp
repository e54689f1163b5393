#include "loopflow/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "loopflow/format.hpp"

namespace loopflow {

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(origin + ":" + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw Error(origin + ":" + std::to_string(line_no) + ": empty key");
        if (!cfg.values_.emplace(key, value).second)
            throw Error(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file " + path.string());
    return parse(in, path.string());
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double v = 0;
    if (!parse_real(it->second, v))
        throw Error(origin_ + ": key '" + key + "' expects a number, got '" + it->second + "'");
    return v;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    long long v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(origin_ + ": key '" + key + "' expects an integer, got '" + s + "'");
    return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(origin_ + ": key '" + key + "' expects an unsigned integer, got '" + s + "'");
    return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& s = it->second;
    if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "off" || s == "no") return false;
    throw Error(origin_ + ": key '" + key + "' expects true/false, got '" + s + "'");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key,
                                                const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(it->second)) {
        double v = 0;
        if (!parse_real(item, v))
            throw Error(origin_ + ": key '" + key + "' has non-numeric item '" + item + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<int> KeyValueConfig::get_ints(const std::string& key, const std::vector<int>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    for (const auto& item : split_list(it->second)) {
        int v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size())
            throw Error(origin_ + ": key '" + key + "' has non-integer item '" + item + "'");
        out.push_back(v);
    }
    return out;
}

Date KeyValueConfig::get_date(const std::string& key, Date fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return parse_date(it->second);
    } catch (const Error& e) {
        throw Error(origin_ + ": key '" + key + "': " + e.what());
    }
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& known,
                                    const std::vector<std::string>& prefixes) const {
    for (const auto& [key, value] : values_) {
        if (known.count(key)) continue;
        bool prefixed = false;
        for (const auto& p : prefixes) prefixed = prefixed || key.rfind(p, 0) == 0;
        if (!prefixed) throw Error(origin_ + ": unknown key '" + key + "'");
    }
}

}  // namespace loopflow
