#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "loopflow/core.hpp"

namespace loopflow {

struct ResampleResult {
    std::vector<AggregatedRecord> records;
    /// Slots of the trailing partial window that were not emitted.
    std::size_t dropped_slots = 0;
    double dropped_volume = 0.0;
    double dropped_occupancy = 0.0;
};

/// Sums consecutive, midnight-anchored windows of interval.slots() samples. Each record is
/// labelled with the date, time and month of its first slot. The series must start on a
/// window boundary; a trailing partial window is dropped.
ResampleResult resample(const DetectorSeries& series, CollectionInterval interval);

/// `date,time,month,volume_sum,occupancy_sum`
void write_resampled_csv(std::ostream& out, std::span<const AggregatedRecord> records);

}  // namespace loopflow
