#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "loopflow/ingest.hpp"
#include "loopflow/synth.hpp"
#include "support.hpp"

using namespace loopflow;
using testing_support::parse_text;
using testing_support::sample;

namespace {

const char* kHeader3 = "Date,Time,ID,Lane1_Vol,Lane2_Vol,Lane3_Vol,Lane1_Occ,Lane2_Occ,Lane3_Occ\n";

RawSeries series_with_holes(const std::vector<double>& vol, const std::vector<bool>& present) {
    RawSeries s;
    s.detector_id = 191;
    s.start = {make_date(2022, 7, 4), 0};
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (present[i])
            s.slots.push_back(SlotTotals{vol[i], 2 * vol[i]});
        else
            s.slots.push_back(std::nullopt);
    }
    return s;
}

}  // namespace

TEST_CASE("a data row maps onto lane fields") {
    auto r = parse_text(std::string(kHeader3) + "2022-07-01,00:00:30,191,5,3,2,12,8,6\n");
    REQUIRE(r.errors.empty());
    REQUIRE(r.samples.size() == 1);
    const auto& s = r.samples[0];
    CHECK(s.date == make_date(2022, 7, 1));
    CHECK(s.time_end == 30);
    CHECK(s.slot_start().second_of_day == 0);
    CHECK(s.detector_id == 191);
    CHECK(s.lane_volumes == std::vector<std::int64_t>{5, 3, 2});
    CHECK(s.lane_occupancies == std::vector<std::int64_t>{12, 8, 6});
    CHECK(r.layout.lanes == 3);
}

TEST_CASE("midnight labels belong to the previous day's last slot") {
    auto r = parse_text(std::string(kHeader3) + "2022-07-02,00:00:00,191,1,1,1,1,1,1\n" +
                        "2022-07-01,24:00:00,192,1,1,1,1,1,1\n");
    REQUIRE(r.samples.size() == 2);
    for (const auto& s : r.samples) {
        CHECK(s.date == make_date(2022, 7, 1));
        CHECK(s.time_end == 86400);
    }

    ParseOptions start;
    start.time_label = TimeLabel::IntervalStart;
    auto r2 = parse_text(std::string(kHeader3) + "2022-07-02,00:00:00,191,1,1,1,1,1,1\n", start);
    REQUIRE(r2.samples.size() == 1);
    CHECK(r2.samples[0].date == make_date(2022, 7, 2));
    CHECK(r2.samples[0].time_end == 30);
}

TEST_CASE("a header without ID is fatal and names the column") {
    CHECK_THROWS_WITH_AS(parse_text("Date,Time,Lane1_Vol,Lane1_Occ\n2022-07-01,00:00:30,1,1\n"),
                         doctest::Contains("ID"), ParseError);
    CHECK_THROWS_AS(parse_text(""), ParseError);
}

TEST_CASE("bad rows are collected with line numbers until the budget runs out") {
    std::string text = kHeader3;
    text += "2022-07-01,00:00:30,191,5,3,2,12,8,6\n";
    text += "2022-07-01,00:01:00,191,x,3,2,12,8,6\n";
    text += "2022-07-01,00:01:30,191,5,3,2,12,8,901\n";
    text += "2022-07-01,00:02:00,191,5,3\n";
    auto r = parse_text(text);
    CHECK(r.samples.size() == 1);
    REQUIRE(r.errors.size() == 3);
    CHECK(r.errors[0].line == 3);
    CHECK(r.errors[1].line == 4);
    CHECK(r.errors[2].line == 5);

    ParseOptions tight;
    tight.error_budget = 2;
    CHECK_THROWS_AS(parse_text(text, tight), ParseError);
}

TEST_CASE("an empty volume or occupancy cell marks the whole slot missing") {
    auto r = parse_text(std::string(kHeader3) + "2022-07-01,00:00:30,191,5,,2,12,8,6\n");
    REQUIRE(r.samples.size() == 1);
    CHECK(r.samples[0].missing);
    CHECK(r.empty_cells == 1);
    CHECK(r.total_cells == 6);
}

TEST_CASE("one detector-day of rows yields one sample per 30 s slot") {
    SynthConfig cfg;
    cfg.start_date = cfg.end_date = make_date(2022, 7, 1);
    cfg.detector_ids = {191};
    cfg.missing_rate = 0;
    auto out = generate(cfg);
    std::ostringstream csv;
    write_raw_csv(csv, out.samples, out.layout);
    auto r = parse_text(csv.str());
    int counter = 0;
    for (int t = 30; t <= 86400; t += 30) ++counter;
    CHECK(r.samples.size() == static_cast<std::size_t>(counter));
    CHECK(r.errors.empty());
}

TEST_CASE("writing then parsing reproduces the samples") {
    SynthConfig cfg;
    cfg.start_date = make_date(2022, 7, 1);
    cfg.end_date = make_date(2022, 7, 2);
    cfg.detector_ids = {66, 191};
    cfg.missing_rate = 0.02;
    cfg.seed = 5;
    auto out = generate(cfg);
    for (auto label : {TimeLabel::IntervalEnd, TimeLabel::IntervalStart}) {
        std::ostringstream csv;
        write_raw_csv(csv, out.samples, out.layout, label);
        ParseOptions opts;
        opts.time_label = label;
        auto r = parse_text(csv.str(), opts);
        REQUIRE(r.errors.empty());
        CHECK(r.samples == out.samples);
    }
}

TEST_CASE("aggregate_lanes sums volumes and occupancies") {
    const Date d = make_date(2022, 7, 1);
    CHECK(aggregate_lanes(sample(d, 30, 191, {5, 3, 2}, {12, 8, 6})) == SlotTotals{10, 26});
    CHECK(aggregate_lanes(sample(d, 30, 191, {7}, {100})) == SlotTotals{7, 100});
}

TEST_CASE("pivot groups by detector, sorts, and rejects duplicates") {
    const Date d = make_date(2022, 7, 1);
    std::vector<RawSample> rows{sample(d, 90, 191, {3}, {3}), sample(d, 30, 66, {1}, {1}),
                                sample(d, 30, 191, {1}, {1}), sample(d, 60, 191, {2}, {2})};
    auto m = pivot_by_detector(rows);
    CHECK(m.size() == 2);
    const auto& s = m.at(191);
    REQUIRE(s.slots.size() == 3);
    CHECK(s.start == Timestamp{d, 0});
    for (std::size_t i = 0; i < 3; ++i) CHECK(s.slots[i]->volume == static_cast<double>(i + 1));

    std::vector<RawSample> dup{sample(d, 30, 191, {1}, {1}), sample(d, 30, 191, {2}, {2})};
    std::vector<std::size_t> lines{2, 9};
    CHECK_THROWS_WITH_AS(pivot_by_detector(dup, lines), doctest::Contains("line 2 and line 9"),
                         DuplicateSampleError);
}

TEST_CASE("gap detection reports runs of missing slots") {
    std::vector<RawSample> rows;
    const Date d = make_date(2022, 7, 1);
    for (int t = 30; t <= 86400; t += 30) {
        // Slots starting 10:00:00 and 10:00:30 are absent.
        if (t - 30 == 36000 || t - 30 == 36030) continue;
        rows.push_back(sample(d, t, 191, {1}, {1}));
    }
    auto series = pivot_by_detector(rows).at(191);
    auto report = detect_gaps(series);
    REQUIRE(report.gaps.size() == 1);
    CHECK(report.gaps[0].length == 2);
    CHECK(report.gaps[0].start == Timestamp{d, 36000});
    CHECK(report.gaps[0].interior);
    CHECK(report.missing_slots == 2);

    std::vector<RawSample> full;
    for (int t = 30; t <= 86400; t += 30) full.push_back(sample(d, t, 191, {1}, {1}));
    CHECK(detect_gaps(pivot_by_detector(full).at(191)).gaps.empty());
}

TEST_CASE("generated holes are found at the configured rate") {
    SynthConfig cfg;
    cfg.start_date = make_date(2022, 7, 1);
    cfg.end_date = make_date(2022, 7, 10);
    cfg.detector_ids = {191};
    cfg.seed = 21;
    auto out = generate(cfg);
    auto series = pivot_by_detector(out.samples).at(191);
    auto report = detect_gaps(series);
    CHECK(report.missing_slots == out.truth.size());
    const double tolerance = 1.0 / static_cast<double>(report.total_slots);
    CHECK(std::abs(report.missing_fraction() - 0.0114) <= 0.002 + tolerance);
}

TEST_CASE("linear interpolation fills along the neighbour line") {
    {
        auto s = interpolate_linear(series_with_holes({10, 0, 14}, {true, false, true}));
        CHECK(s.samples[1].volume == 12);
        CHECK(s.samples[1].occupancy == 24);
    }
    {
        auto s = interpolate_linear(series_with_holes({10, 0, 0, 0, 10}, {true, false, false, false, true}));
        CHECK(s.samples[1].volume == 10);
        CHECK(s.samples[2].volume == 10);
        CHECK(s.samples[3].volume == 10);
    }
    {
        auto s = interpolate_linear(series_with_holes({0, 0, 0, 0, 8}, {true, false, false, false, true}));
        CHECK(s.samples[1].volume == 2);
        CHECK(s.samples[2].volume == 4);
        CHECK(s.samples[3].volume == 6);
        CHECK(s.gaps_filled == 3);
        CHECK(s.boundary_filled == 0);
    }
    {
        auto s = interpolate_linear(series_with_holes({0, 5, 0, 9, 0}, {false, true, false, true, false}));
        CHECK(s.samples[0].volume == 5);
        CHECK(s.samples[4].volume == 9);
        CHECK(s.boundary_filled == 2);
    }
    CHECK_THROWS_AS(interpolate_linear(series_with_holes({1, 0, 0}, {true, false, false})),
                    UnrecoverableSeriesError);
}

TEST_CASE("interpolation invariants on random gap patterns") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> val(0, 50);
    std::bernoulli_distribution hole(0.2);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 20 + rng() % 200;
        std::vector<double> vol(n);
        std::vector<bool> present(n);
        for (std::size_t i = 0; i < n; ++i) {
            vol[i] = val(rng);
            present[i] = !hole(rng);
        }
        present[rng() % n] = true;
        present[rng() % n] = true;
        if (std::count(present.begin(), present.end(), true) < 2) continue;
        auto raw = series_with_holes(vol, present);
        auto filled = interpolate_linear(raw);
        REQUIRE(filled.samples.size() == n);

        std::size_t first = n, last = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (present[i]) {
                first = std::min(first, i);
                last = i;
                CHECK(filled.samples[i] == *raw.slots[i]);
            }
        for (std::size_t i = first + 1; i < last; ++i) {
            if (present[i]) continue;
            std::size_t a = i, b = i;
            while (!present[a]) --a;
            while (!present[b]) ++b;
            CHECK(filled.samples[i].volume >= std::min(vol[a], vol[b]) - 1e-12);
            CHECK(filled.samples[i].volume <= std::max(vol[a], vol[b]) + 1e-12);
        }

        RawSeries again;
        again.detector_id = raw.detector_id;
        again.start = filled.start;
        for (const auto& t : filled.samples) again.slots.push_back(t);
        CHECK(detect_gaps(again).gaps.empty());
    }
}

TEST_CASE("gap report columns") {
    std::ostringstream out;
    std::vector<GapDescriptor> gaps{{191, {make_date(2022, 7, 1), 36000}, 2, true}};
    write_gap_report(out, gaps);
    CHECK(out.str() == "detector_id,start_date,start_time,length_slots\n191,2022-07-01,10:00:00,2\n");
}
