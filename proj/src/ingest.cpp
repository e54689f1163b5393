#include "loopflow/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace loopflow {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    while (true) {
        auto comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            cells.push_back(line.substr(pos));
            break;
        }
        cells.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    for (auto& c : cells) {
        while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
        while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r'))
            c.remove_suffix(1);
    }
    return cells;
}

std::int64_t parse_int(std::string_view cell, const char* what) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size())
        throw Error(std::string("unparseable ") + what + " '" + std::string(cell) + "'");
    return v;
}

struct ColumnMap {
    std::size_t date = 0, time = 0, id = 0;
    std::vector<std::size_t> vol, occ, off, psg;
    std::size_t width = 0;
};

ColumnMap map_header(std::string_view header) {
    auto names = split_csv(header);
    if (!names.empty() && names[0].starts_with("\xEF\xBB\xBF")) names[0].remove_prefix(3);
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < names.size(); ++i) index.emplace(names[i], i);

    ColumnMap m;
    m.width = names.size();
    std::vector<std::string> missing;
    auto require = [&](const std::string& name, std::size_t& slot) {
        auto it = index.find(name);
        if (it == index.end())
            missing.push_back(name);
        else
            slot = it->second;
    };
    require("Date", m.date);
    require("Time", m.time);
    require("ID", m.id);

    for (std::size_t lane = 1;; ++lane) {
        auto it = index.find("Lane" + std::to_string(lane) + "_Vol");
        if (it == index.end()) break;
        m.vol.push_back(it->second);
    }
    if (m.vol.empty()) missing.emplace_back("Lane1_Vol");
    for (std::size_t lane = 1; lane <= std::max<std::size_t>(m.vol.size(), 1); ++lane) {
        std::size_t col = 0;
        require("Lane" + std::to_string(lane) + "_Occ", col);
        m.occ.push_back(col);
    }
    for (std::size_t k = 1;; ++k) {
        auto it = index.find("Off" + std::to_string(k) + "_cnt");
        if (it == index.end()) break;
        m.off.push_back(it->second);
    }
    for (std::size_t k = 1;; ++k) {
        auto it = index.find("Psg" + std::to_string(k) + "_cnt");
        if (it == index.end()) break;
        m.psg.push_back(it->second);
    }

    if (!missing.empty()) {
        std::string msg = "malformed header: missing column(s)";
        for (const auto& name : missing) msg += " " + name;
        throw ParseError(msg);
    }
    return m;
}

// Reads cells at `cols`; returns false when any cell is empty.
bool read_counts(const std::vector<std::string_view>& cells, const std::vector<std::size_t>& cols,
                 std::vector<std::int64_t>& out, const char* what, std::size_t* empties = nullptr) {
    out.clear();
    bool complete = true;
    for (auto c : cols) {
        if (cells[c].empty()) {
            complete = false;
            if (empties) ++*empties;
            continue;
        }
        out.push_back(parse_int(cells[c], what));
    }
    if (!complete) out.clear();
    return complete;
}

void to_slot_end(RawSample& s, int clock, TimeLabel label) {
    if (clock % kSlotSeconds != 0) throw Error("time is not on the 30 s grid");
    if (label == TimeLabel::IntervalEnd) {
        if (clock == 0) {
            s.date = add_days(s.date, -1);
            s.time_end = kSecondsPerDay;
        } else {
            s.time_end = clock;
        }
    } else {
        if (clock >= kSecondsPerDay) throw Error("interval start at 24:00:00");
        s.time_end = clock + kSlotSeconds;
    }
}

}  // namespace

ParseResult parse_raw_csv(std::istream& in, const ParseOptions& opts) {
    ParseResult result;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty input: no header row");
    const ColumnMap cols = map_header(line);
    result.layout = {cols.vol.size(), cols.off.size(), cols.psg.size()};

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv(line);
        try {
            if (cells.size() != cols.width)
                throw Error("expected " + std::to_string(cols.width) + " cells, found " +
                            std::to_string(cells.size()));
            RawSample s;
            s.date = parse_date(cells[cols.date]);
            to_slot_end(s, parse_clock(cells[cols.time]), opts.time_label);
            s.detector_id = static_cast<int>(parse_int(cells[cols.id], "ID"));

            std::size_t empties = 0;
            bool vol_ok = read_counts(cells, cols.vol, s.lane_volumes, "volume", &empties);
            bool occ_ok = read_counts(cells, cols.occ, s.lane_occupancies, "occupancy", &empties);
            read_counts(cells, cols.off, s.off_counts, "off-ramp count");
            read_counts(cells, cols.psg, s.psg_counts, "passage count");
            if (!vol_ok || !occ_ok) {
                s.missing = true;
                s.lane_volumes.clear();
                s.lane_occupancies.clear();
            }
            auto violations = validate_sample(s);
            if (!violations.empty()) throw Error(violations.front());

            result.total_cells += cols.vol.size() + cols.occ.size();
            result.empty_cells += empties;
            result.samples.push_back(std::move(s));
            result.lines.push_back(line_no);
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            result.errors.push_back({line_no, e.what()});
            if (result.errors.size() > opts.error_budget)
                throw ParseError("more than " + std::to_string(opts.error_budget) +
                                 " bad rows; last at line " + std::to_string(line_no) + ": " +
                                 e.what());
        }
    }
    return result;
}

void write_raw_csv(std::ostream& out, std::span<const RawSample> samples, const CsvLayout& layout,
                   TimeLabel label) {
    out << "Date,Time,ID";
    for (std::size_t k = 1; k <= layout.lanes; ++k) out << ",Lane" << k << "_Vol";
    for (std::size_t k = 1; k <= layout.lanes; ++k) out << ",Lane" << k << "_Occ";
    for (std::size_t k = 1; k <= layout.off_columns; ++k) out << ",Off" << k << "_cnt";
    for (std::size_t k = 1; k <= layout.psg_columns; ++k) out << ",Psg" << k << "_cnt";
    out << '\n';

    auto put = [&](const std::vector<std::int64_t>& values, std::size_t width) {
        for (std::size_t k = 0; k < width; ++k) {
            out << ',';
            if (k < values.size()) out << values[k];
        }
    };
    for (const auto& s : samples) {
        Date date = s.date;
        int clock = s.time_end;
        if (label == TimeLabel::IntervalStart) {
            clock -= kSlotSeconds;
        } else if (clock == kSecondsPerDay) {
            date = add_days(date, 1);
            clock = 0;
        }
        out << format_date(date) << ',' << format_clock(clock) << ',' << s.detector_id;
        put(s.missing ? std::vector<std::int64_t>{} : s.lane_volumes, layout.lanes);
        put(s.missing ? std::vector<std::int64_t>{} : s.lane_occupancies, layout.lanes);
        put(s.off_counts, layout.off_columns);
        put(s.psg_counts, layout.psg_columns);
        out << '\n';
    }
}

SlotTotals aggregate_lanes(const RawSample& s) {
    SlotTotals t;
    for (auto v : s.lane_volumes) t.volume += static_cast<double>(v);
    for (auto o : s.lane_occupancies) t.occupancy += static_cast<double>(o);
    return t;
}

Timestamp RawSeries::timestamp(std::size_t i) const {
    long abs_slot = start.slot() + static_cast<long>(i);
    return {add_days(start.date, abs_slot / kSlotsPerDay),
            static_cast<int>(abs_slot % kSlotsPerDay) * kSlotSeconds};
}

std::size_t RawSeries::present() const {
    return static_cast<std::size_t>(
        std::count_if(slots.begin(), slots.end(), [](const auto& s) { return s.has_value(); }));
}

std::map<int, RawSeries> pivot_by_detector(std::span<const RawSample> samples,
                                           std::span<const std::size_t> lines) {
    std::map<int, std::vector<std::size_t>> by_id;
    for (std::size_t i = 0; i < samples.size(); ++i) by_id[samples[i].detector_id].push_back(i);

    auto origin = [&](std::size_t i) {
        return lines.empty() ? "record " + std::to_string(i + 1)
                             : "line " + std::to_string(lines[i]);
    };

    std::map<int, RawSeries> out;
    for (auto& [id, idx] : by_id) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return samples[a].slot_start() < samples[b].slot_start();
        });
        RawSeries series;
        series.detector_id = id;
        series.start = samples[idx.front()].slot_start();
        const long span = samples[idx.back()].slot_start().slots_since(series.start) + 1;
        series.slots.assign(static_cast<std::size_t>(span), std::nullopt);

        for (std::size_t j = 0; j < idx.size(); ++j) {
            const auto& s = samples[idx[j]];
            if (j > 0 && s.slot_start() == samples[idx[j - 1]].slot_start()) {
                throw DuplicateSampleError("duplicate sample for detector " + std::to_string(id) +
                                           " at " + format_timestamp(s.slot_start()) + " (" +
                                           origin(idx[j - 1]) + " and " + origin(idx[j]) + ")");
            }
            if (!s.missing) {
                auto pos = static_cast<std::size_t>(s.slot_start().slots_since(series.start));
                series.slots[pos] = aggregate_lanes(s);
            }
        }
        out.emplace(id, std::move(series));
    }
    return out;
}

GapReport detect_gaps(const RawSeries& series) {
    GapReport report;
    report.total_slots = series.slots.size();
    const std::size_t n = series.slots.size();
    std::size_t i = 0;
    while (i < n) {
        if (series.slots[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && !series.slots[j]) ++j;
        report.gaps.push_back({series.detector_id, series.timestamp(i), j - i, i > 0 && j < n});
        report.missing_slots += j - i;
        i = j;
    }
    return report;
}

DetectorSeries interpolate_linear(const RawSeries& series) {
    std::vector<std::size_t> present;
    for (std::size_t i = 0; i < series.slots.size(); ++i)
        if (series.slots[i]) present.push_back(i);
    if (present.size() < 2)
        throw UnrecoverableSeriesError("detector " + std::to_string(series.detector_id) + " has " +
                                       std::to_string(present.size()) +
                                       " present sample(s); need at least 2 to interpolate");

    DetectorSeries out;
    out.detector_id = series.detector_id;
    out.start = series.start;
    out.samples.resize(series.slots.size());

    const std::size_t first = present.front(), last = present.back();
    for (std::size_t i = 0; i < first; ++i) out.samples[i] = *series.slots[first];
    for (std::size_t i = last + 1; i < series.slots.size(); ++i) out.samples[i] = *series.slots[last];
    out.boundary_filled = first + (series.slots.size() - 1 - last);

    for (std::size_t p = 0; p < present.size(); ++p) {
        const std::size_t a = present[p];
        out.samples[a] = *series.slots[a];
        if (p + 1 == present.size()) break;
        const std::size_t b = present[p + 1];
        const SlotTotals& lo = *series.slots[a];
        const SlotTotals& hi = *series.slots[b];
        const double span = static_cast<double>(b - a);
        for (std::size_t k = 1; a + k < b; ++k) {
            const double frac = static_cast<double>(k) / span;
            out.samples[a + k] = {lo.volume + (hi.volume - lo.volume) * frac,
                                  lo.occupancy + (hi.occupancy - lo.occupancy) * frac};
        }
        out.gaps_filled += b - a - 1;
    }
    out.gaps_filled += out.boundary_filled;
    return out;
}

void write_gap_report(std::ostream& out, std::span<const GapDescriptor> gaps) {
    out << "detector_id,start_date,start_time,length_slots\n";
    for (const auto& g : gaps)
        out << g.detector_id << ',' << format_date(g.start.date) << ','
            << format_clock(g.start.second_of_day) << ',' << g.length << '\n';
}

}  // namespace loopflow
