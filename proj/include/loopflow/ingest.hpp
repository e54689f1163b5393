#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loopflow/core.hpp"

namespace loopflow {

/// Fatal problem with an input file (bad header, too many bad rows).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Two rows for the same detector and slot.
class DuplicateSampleError : public Error {
public:
    using Error::Error;
};

/// A series with fewer than two present samples cannot be interpolated.
class UnrecoverableSeriesError : public Error {
public:
    using Error::Error;
};

/// Which end of the 30 s interval the Time column names.
enum class TimeLabel { IntervalEnd, IntervalStart };

struct ParseOptions {
    std::size_t error_budget = 100;
    TimeLabel time_label = TimeLabel::IntervalEnd;
};

struct RowError {
    std::size_t line = 0;
    std::string message;
};

struct CsvLayout {
    std::size_t lanes = 0;
    std::size_t off_columns = 0;
    std::size_t psg_columns = 0;
};

struct ParseResult {
    std::vector<RawSample> samples;
    /// 1-based source line of each sample.
    std::vector<std::size_t> lines;
    std::vector<RowError> errors;
    CsvLayout layout;
    std::size_t total_cells = 0;  // volume and occupancy cells only
    std::size_t empty_cells = 0;
};

ParseResult parse_raw_csv(std::istream& in, const ParseOptions& opts = {});

/// Writes the header and one row per sample. The slot ending at midnight is written as
/// the next day's 00:00:00 when `label` is IntervalEnd.
void write_raw_csv(std::ostream& out, std::span<const RawSample> samples, const CsvLayout& layout,
                   TimeLabel label = TimeLabel::IntervalEnd);

/// Lane sums of a present sample.
SlotTotals aggregate_lanes(const RawSample& s);

/// Per-detector series on the 30 s grid; std::nullopt marks a missing slot.
struct RawSeries {
    int detector_id = 0;
    Timestamp start;
    std::vector<std::optional<SlotTotals>> slots;

    Timestamp timestamp(std::size_t i) const;
    std::size_t present() const;
};

/// Groups samples by detector and lays them on a gap-preserving grid spanning the first
/// to last row seen. `lines` (optional, parallel to `samples`) is used in duplicate errors.
std::map<int, RawSeries> pivot_by_detector(std::span<const RawSample> samples,
                                           std::span<const std::size_t> lines = {});

struct GapDescriptor {
    int detector_id = 0;
    Timestamp start;
    std::size_t length = 0;
    /// False for runs touching the first or last slot of the series.
    bool interior = true;
};

struct GapReport {
    std::vector<GapDescriptor> gaps;
    std::size_t total_slots = 0;
    std::size_t missing_slots = 0;

    double missing_fraction() const {
        return total_slots == 0 ? 0.0
                                : static_cast<double>(missing_slots) / static_cast<double>(total_slots);
    }
};

GapReport detect_gaps(const RawSeries& series);

/// Fills interior gaps along the straight line between the nearest present neighbours
/// (volume and occupancy independently) and boundary gaps with the nearest present value.
DetectorSeries interpolate_linear(const RawSeries& series);

/// `detector_id,start_date,start_time,length_slots`
void write_gap_report(std::ostream& out, std::span<const GapDescriptor> gaps);

}  // namespace loopflow
