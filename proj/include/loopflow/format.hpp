#pragma once

#include <charconv>
#include <string>
#include <string_view>

namespace loopflow {

/// Shortest decimal text that parses back to the same double.
inline std::string format_real(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

/// Parses a whole cell as a double; returns false on trailing garbage.
inline bool parse_real(std::string_view text, double& out) {
    if (text.empty()) return false;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

}  // namespace loopflow
