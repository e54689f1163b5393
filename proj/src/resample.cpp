#include "loopflow/resample.hpp"

#include <ostream>

#include "loopflow/format.hpp"

namespace loopflow {

ResampleResult resample(const DetectorSeries& series, CollectionInterval interval) {
    const int width = interval.slots();
    if (series.start.slot() % width != 0) {
        throw Error("series starts at " + format_timestamp(series.start) +
                    ", which is not aligned to a " + format_minutes(interval.minutes()) +
                    " min boundary (start slot must be a multiple of " + std::to_string(width) +
                    " counted from midnight)");
    }

    ResampleResult out;
    const std::size_t n = series.samples.size();
    const auto w = static_cast<std::size_t>(width);
    out.records.reserve(n / w);

    std::size_t i = 0;
    for (; i + w <= n; i += w) {
        AggregatedRecord rec;
        rec.interval = interval;
        const Timestamp first = series.timestamp(i);
        rec.label_date = first.date;
        rec.label_time = first.second_of_day;
        rec.month = month_of(first.date);
        rec.detector_id = series.detector_id;
        for (std::size_t k = i; k < i + w; ++k) {
            rec.volume_sum += series.samples[k].volume;
            rec.occupancy_sum += series.samples[k].occupancy;
        }
        out.records.push_back(rec);
    }
    for (; i < n; ++i) {
        ++out.dropped_slots;
        out.dropped_volume += series.samples[i].volume;
        out.dropped_occupancy += series.samples[i].occupancy;
    }
    return out;
}

void write_resampled_csv(std::ostream& out, std::span<const AggregatedRecord> records) {
    out << "date,time,month,volume_sum,occupancy_sum\n";
    for (const auto& r : records)
        out << format_date(r.label_date) << ',' << format_clock(r.label_time) << ',' << r.month
            << ',' << format_real(r.volume_sum) << ',' << format_real(r.occupancy_sum) << '\n';
}

}  // namespace loopflow
