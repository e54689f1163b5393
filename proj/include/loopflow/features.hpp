#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "loopflow/core.hpp"

namespace loopflow {

/// 1 = Sunday ... 7 = Saturday.
int weekday_index(Date d);

inline bool is_weekday(Date d) {
    const int w = weekday_index(d);
    return w >= 2 && w <= 6;
}

/// Keeps records whose label date falls Monday through Friday, in order.
std::vector<AggregatedRecord> filter_weekdays(std::span<const AggregatedRecord> records);

/// Linear map of seconds since midnight onto [-1, 1).
double normalize_time(int seconds_of_day);

inline constexpr int kTargetDetector = 191;

/// One CFD_T row per record. Throws if any record is not from `detector_id`.
FeatureDataset build_cfd(std::span<const AggregatedRecord> records, CollectionInterval interval,
                         int detector_id = kTargetDetector);

inline const std::vector<std::string>& cfd_feature_names() {
    static const std::vector<std::string> names{"month", "time_norm", "occ"};
    return names;
}

/// `month,time_norm,occ,vol`
void write_cfd_csv(std::ostream& out, const FeatureDataset& ds);
/// `{"interval_T":..,"rows":..,"first_date":..,"last_date":..}`
std::string cfd_sidecar_json(const FeatureDataset& ds);
FeatureDataset read_cfd_csv(std::istream& in, CollectionInterval interval);

}  // namespace loopflow
