#include "loopflow/features.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "loopflow/format.hpp"

namespace loopflow {

int weekday_index(Date d) {
    return static_cast<int>(std::chrono::weekday{std::chrono::sys_days{d}}.c_encoding()) + 1;
}

std::vector<AggregatedRecord> filter_weekdays(std::span<const AggregatedRecord> records) {
    std::vector<AggregatedRecord> out;
    out.reserve(records.size());
    for (const auto& r : records)
        if (is_weekday(r.label_date)) out.push_back(r);
    return out;
}

double normalize_time(int seconds_of_day) {
    return 2.0 * (static_cast<double>(seconds_of_day) / kSecondsPerDay) - 1.0;
}

FeatureDataset build_cfd(std::span<const AggregatedRecord> records, CollectionInterval interval,
                         int detector_id) {
    FeatureDataset ds;
    ds.interval = interval;
    ds.rows.reserve(records.size());
    ds.stamps.reserve(records.size());
    for (const auto& r : records) {
        if (r.detector_id != detector_id)
            throw Error("record from detector " + std::to_string(r.detector_id) +
                        " passed to a CFD build for detector " + std::to_string(detector_id));
        if (r.interval != interval)
            throw Error("record interval " + format_minutes(r.interval.minutes()) +
                        " min does not match dataset interval " +
                        format_minutes(interval.minutes()) + " min");
        ds.rows.push_back({r.month, normalize_time(r.label_time), r.occupancy_sum, r.volume_sum});
        ds.stamps.push_back({r.label_date, r.label_time});
    }
    return ds;
}

void write_cfd_csv(std::ostream& out, const FeatureDataset& ds) {
    out << "month,time_norm,occ,vol\n";
    for (const auto& r : ds.rows)
        out << r.month << ',' << format_real(r.time_norm) << ',' << format_real(r.occ) << ','
            << format_real(r.vol) << '\n';
}

std::string cfd_sidecar_json(const FeatureDataset& ds) {
    nlohmann::ordered_json j;
    j["interval_T"] = ds.interval.minutes();
    j["rows"] = ds.rows.size();
    if (!ds.stamps.empty()) {
        j["first_date"] = format_date(ds.stamps.front().date);
        j["last_date"] = format_date(ds.stamps.back().date);
    } else {
        j["first_date"] = nullptr;
        j["last_date"] = nullptr;
    }
    return j.dump(2);
}

FeatureDataset read_cfd_csv(std::istream& in, CollectionInterval interval) {
    std::string line;
    if (!std::getline(in, line)) throw Error("empty CFD file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "month,time_norm,occ,vol")
        throw Error("unexpected CFD header '" + line + "', expected month,time_norm,occ,vol");

    FeatureDataset ds;
    ds.interval = interval;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        double cells[4];
        std::size_t pos = 0;
        bool ok = true;
        for (int c = 0; c < 4 && ok; ++c) {
            auto end = c < 3 ? line.find(',', pos) : line.size();
            if (end == std::string::npos) {
                ok = false;
                break;
            }
            ok = parse_real(std::string_view(line).substr(pos, end - pos), cells[c]);
            pos = end + 1;
        }
        if (!ok || pos != line.size() + 1)
            throw Error("bad CFD row at line " + std::to_string(line_no));
        ds.rows.push_back({static_cast<int>(cells[0]), cells[1], cells[2], cells[3]});
    }
    return ds;
}

}  // namespace loopflow
