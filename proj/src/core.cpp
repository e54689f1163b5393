#include "loopflow/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace loopflow {

namespace {

template <typename T>
bool parse_fixed(std::string_view text, T& out) {
    if (text.empty()) return false;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

}  // namespace

Date make_date(int year, unsigned month, unsigned day) {
    Date d{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
    if (!d.ok()) throw Error("invalid calendar date " + std::to_string(year) + "-" +
                             std::to_string(month) + "-" + std::to_string(day));
    return d;
}

Date add_days(Date d, long n) {
    return Date{std::chrono::sys_days{d} + std::chrono::days{n}};
}

long days_between(Date from, Date to) {
    return (std::chrono::sys_days{to} - std::chrono::sys_days{from}).count();
}

int month_of(Date d) { return static_cast<int>(static_cast<unsigned>(d.month())); }

Date parse_date(std::string_view text) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' ||
        !parse_fixed(text.substr(0, 4), y) || !parse_fixed(text.substr(5, 2), m) ||
        !parse_fixed(text.substr(8, 2), d)) {
        throw Error("malformed date '" + std::string(text) + "', expected YYYY-MM-DD");
    }
    return make_date(y, m, d);
}

std::string format_date(Date d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

int parse_clock(std::string_view text) {
    int h = 0, m = 0, s = 0;
    if (text.size() != 8 || text[2] != ':' || text[5] != ':' ||
        !parse_fixed(text.substr(0, 2), h) || !parse_fixed(text.substr(3, 2), m) ||
        !parse_fixed(text.substr(6, 2), s) || m > 59 || s > 59 || h > 24 ||
        (h == 24 && (m != 0 || s != 0))) {
        throw Error("malformed time '" + std::string(text) + "', expected HH:MM:SS");
    }
    return h * 3600 + m * 60 + s;
}

std::string format_clock(int seconds) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d:%02d:%02d", seconds / 3600, (seconds / 60) % 60,
                  seconds % 60);
    return buf;
}

Timestamp Timestamp::next_slot() const {
    if (second_of_day + kSlotSeconds >= kSecondsPerDay) return {add_days(date, 1), 0};
    return {date, second_of_day + kSlotSeconds};
}

long Timestamp::slots_since(const Timestamp& from) const {
    return days_between(from.date, date) * kSlotsPerDay + slot() - from.slot();
}

std::string format_timestamp(const Timestamp& t) {
    return format_date(t.date) + " " + format_clock(t.second_of_day);
}

CollectionInterval CollectionInterval::from_minutes(double minutes) {
    for (int slots : {1, 2, 4, 10, 20, 30}) {
        if (minutes == slots * kNativeIntervalMin) return CollectionInterval(slots);
    }
    throw Error("unsupported interval " + format_minutes(minutes) +
                " min; expected one of 0.5, 1, 2, 5, 10, 15");
}

const std::vector<CollectionInterval>& CollectionInterval::all() {
    static const std::vector<CollectionInterval> intervals = [] {
        std::vector<CollectionInterval> v;
        for (double m : {0.5, 1.0, 2.0, 5.0, 10.0, 15.0}) v.push_back(from_minutes(m));
        return v;
    }();
    return intervals;
}

std::string format_minutes(double minutes) {
    if (std::isfinite(minutes) && minutes == std::floor(minutes) && std::abs(minutes) < 1e9)
        return std::to_string(static_cast<long long>(minutes));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", minutes);
    return buf;
}

std::vector<std::string> validate_sample(const RawSample& s) {
    std::vector<std::string> out;
    if (!s.date.ok()) out.emplace_back("invalid calendar date");
    if (s.time_end < kSlotSeconds || s.time_end > kSecondsPerDay || s.time_end % kSlotSeconds != 0)
        out.emplace_back("time_end not a 30 s slot end in [30, 86400]");
    if (s.missing) return out;

    if (s.lane_volumes.empty() || s.lane_occupancies.empty())
        out.emplace_back("no lanes");
    if (s.lane_volumes.size() != s.lane_occupancies.size())
        out.emplace_back("lane list length mismatch");
    for (auto v : s.lane_volumes)
        if (v < 0) {
            out.emplace_back("negative volume");
            break;
        }
    for (auto o : s.lane_occupancies)
        if (o < 0) {
            out.emplace_back("negative occupancy");
            break;
        }
    for (auto o : s.lane_occupancies)
        if (o > kMaxSlotOccupancy) {
            out.emplace_back("occupancy exceeds 900");
            break;
        }
    for (const auto* counts : {&s.off_counts, &s.psg_counts})
        for (auto c : *counts)
            if (c < 0) {
                out.emplace_back("negative ramp count");
                break;
            }
    return out;
}

Timestamp DetectorSeries::timestamp(std::size_t i) const {
    long abs_slot = start.slot() + static_cast<long>(i);
    return {add_days(start.date, abs_slot / kSlotsPerDay),
            static_cast<int>(abs_slot % kSlotsPerDay) * kSlotSeconds};
}

}  // namespace loopflow
