#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace loopflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Date = std::chrono::year_month_day;

inline constexpr int kSlotSeconds = 30;
inline constexpr int kSecondsPerDay = 86400;
inline constexpr int kSlotsPerDay = kSecondsPerDay / kSlotSeconds;
/// A 30 Hz detector yields at most this many occupancy samples per 30 s slot.
inline constexpr std::int64_t kMaxSlotOccupancy = 900;
/// Native collection interval of the raw records, in minutes.
inline constexpr double kNativeIntervalMin = 0.5;

Date make_date(int year, unsigned month, unsigned day);
Date add_days(Date d, long n);
long days_between(Date from, Date to);
int month_of(Date d);

/// "YYYY-MM-DD". Throws Error on malformed or invalid input.
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// "HH:MM:SS" to seconds since midnight; accepts 24:00:00.
int parse_clock(std::string_view text);
std::string format_clock(int seconds);

/// Start of a 30 s slot: calendar date plus seconds since midnight (multiple of 30).
struct Timestamp {
    Date date{};
    int second_of_day = 0;

    int slot() const { return second_of_day / kSlotSeconds; }
    Timestamp next_slot() const;
    /// Signed number of 30 s slots from `from` to `*this`.
    long slots_since(const Timestamp& from) const;

    friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

std::string format_timestamp(const Timestamp& t);

/// Collection interval T. Only the six durations of the study are representable.
class CollectionInterval {
public:
    static CollectionInterval from_minutes(double minutes);
    static const std::vector<CollectionInterval>& all();

    double minutes() const { return slots_ * kNativeIntervalMin; }
    int slots() const { return slots_; }
    int seconds() const { return slots_ * kSlotSeconds; }

    friend auto operator<=>(const CollectionInterval&, const CollectionInterval&) = default;

private:
    explicit CollectionInterval(int slots) : slots_(slots) {}
    int slots_;
};

/// Formats 0.5 as "0.5" and whole minutes without a decimal point.
std::string format_minutes(double minutes);

/// One 30-second detector record as it appears in the raw files.
struct RawSample {
    Date date{};
    /// End of the 30 s interval in seconds since midnight, in [30, 86400].
    int time_end = kSlotSeconds;
    int detector_id = 0;
    std::vector<std::int64_t> lane_volumes;
    std::vector<std::int64_t> lane_occupancies;
    std::vector<std::int64_t> off_counts;
    std::vector<std::int64_t> psg_counts;
    /// Set when any volume/occupancy cell was empty; lane lists are then empty.
    bool missing = false;

    Timestamp slot_start() const { return {date, time_end - kSlotSeconds}; }

    friend bool operator==(const RawSample&, const RawSample&) = default;
};

/// Returns one message per violated invariant; empty means valid.
std::vector<std::string> validate_sample(const RawSample& s);

struct SlotTotals {
    double volume = 0.0;
    double occupancy = 0.0;

    friend bool operator==(const SlotTotals&, const SlotTotals&) = default;
};

/// Lane-summed series for one detector at a constant 30 s cadence, with no holes.
struct DetectorSeries {
    int detector_id = 0;
    Timestamp start;
    std::vector<SlotTotals> samples;
    std::size_t gaps_filled = 0;
    std::size_t boundary_filled = 0;

    Timestamp timestamp(std::size_t i) const;
};

struct AggregatedRecord {
    CollectionInterval interval = CollectionInterval::from_minutes(kNativeIntervalMin);
    Date label_date{};
    /// Start of the window's first constituent slot, seconds since midnight.
    int label_time = 0;
    int month = 1;
    double volume_sum = 0.0;
    double occupancy_sum = 0.0;
    int detector_id = 0;
};

/// One CFD_T row: month, normalized time and occupancy predicting volume.
struct FeatureRow {
    int month = 1;
    double time_norm = -1.0;
    double occ = 0.0;
    double vol = 0.0;

    friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

struct FeatureDataset {
    CollectionInterval interval = CollectionInterval::from_minutes(kNativeIntervalMin);
    std::vector<FeatureRow> rows;
    /// Window start of each row; empty when loaded from a CSV dump.
    std::vector<Timestamp> stamps;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }
};

}  // namespace loopflow
