#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "loopflow/config.hpp"
#include "loopflow/experiment.hpp"
#include "loopflow/features.hpp"
#include "loopflow/synth.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace loopflow;

namespace {

// Starts on a Monday a week before a month boundary so that month varies in training data.
SynthConfig small_config(int days, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.start_date = make_date(2022, 7, 25);
    cfg.end_date = add_days(cfg.start_date, days - 1);
    cfg.detector_ids = {191};
    cfg.seed = seed;
    return cfg;
}

std::string csv_of(const SynthOutput& out) {
    std::ostringstream os;
    write_raw_csv(os, out.samples, out.layout);
    write_truth_csv(os, out.truth);
    return os.str();
}

FeatureDataset linear_cfd(std::size_t n) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> occ(0, 400);
    FeatureDataset ds;
    ds.interval = CollectionInterval::from_minutes(5);
    for (std::size_t i = 0; i < n; ++i) {
        const double o = std::round(occ(rng));
        ds.rows.push_back({7 + static_cast<int>(i % 3), normalize_time(static_cast<int>(i % 288) * 300), o,
                           3 * o + 100});
    }
    return ds;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("generated samples are valid and on the full grid") {
    auto cfg = small_config(3, 2);
    cfg.detector_ids = {66, 191};
    auto out = generate(cfg);
    CHECK(out.samples.size() == 3u * 2u * 2880u);
    for (const auto& s : out.samples) {
        if (s.missing) continue;
        CHECK(validate_sample(s).empty());
        for (auto o : s.lane_occupancies) CHECK(o <= 900);
    }
    CHECK(out.volume_noise_sd > 0);
}

TEST_CASE("one detector-day is 2,880 samples and no gaps without holes") {
    auto cfg = small_config(1, 3);
    cfg.missing_rate = 0;
    auto out = generate(cfg);
    CHECK(out.samples.size() == static_cast<std::size_t>(86400 / 30));
    CHECK(out.truth.empty());
    CHECK(detect_gaps(pivot_by_detector(out.samples).at(191)).gaps.empty());
}

TEST_CASE("generation is deterministic across runs and thread counts") {
    auto cfg = small_config(4, 9);
    cfg.detector_ids = {66, 191, 192};
    const auto a = csv_of(generate(cfg, 1));
    CHECK(a == csv_of(generate(cfg, 1)));
    CHECK(a == csv_of(generate(cfg, 4)));
    cfg.seed = 10;
    CHECK(a != csv_of(generate(cfg, 1)));
}

TEST_CASE("realized missing fraction over a month tracks the configured rate") {
    for (double burst : {1.0, 4.0}) {
        auto cfg = small_config(30, 4);
        cfg.burst_mean_length = burst;
        auto out = generate(cfg);
        std::size_t missing = 0;
        for (const auto& s : out.samples) missing += s.missing;
        const double frac = static_cast<double>(missing) / static_cast<double>(out.samples.size());
        CHECK(std::abs(frac - 0.0114) <= 0.002);
        CHECK(missing == out.truth.size());
    }
}

TEST_CASE("truth records sit exactly on the blanked slots") {
    auto cfg = small_config(5, 6);
    auto out = generate(cfg);
    std::size_t t = 0;
    for (const auto& s : out.samples) {
        if (!s.missing) continue;
        REQUIRE(t < out.truth.size());
        CHECK(out.truth[t].date == s.date);
        CHECK(out.truth[t].time_end == s.time_end);
        CHECK(out.truth[t].detector_id == s.detector_id);
        CHECK(out.truth[t].true_vol >= 0);
        ++t;
    }
    CHECK(t == out.truth.size());
}

TEST_CASE("weekdays carry more traffic than weekends") {
    auto cfg = small_config(28, 8);
    cfg.missing_rate = 0;
    auto out = generate(cfg);
    std::map<int, double> per_day;
    std::map<int, bool> weekday;
    for (const auto& s : out.samples) {
        const int day = static_cast<int>(days_between(cfg.start_date, s.date));
        for (auto v : s.lane_volumes) per_day[day] += static_cast<double>(v);
        weekday[day] = is_weekday(s.date);
    }
    double wk = 0, we = 0;
    int nwk = 0, nwe = 0;
    for (auto [day, vol] : per_day) (weekday[day] ? (wk += vol, ++nwk) : (we += vol, ++nwe));
    CHECK(wk / nwk > we / nwe);
}

TEST_CASE("mean occupancy rises with volume") {
    auto cfg = small_config(5, 12);
    cfg.missing_rate = 0;
    auto out = generate(cfg);
    std::map<int, std::pair<double, int>> bins;
    for (const auto& s : out.samples) {
        const auto t = aggregate_lanes(s);
        auto& b = bins[static_cast<int>(t.volume) / 5];
        b.first += t.occupancy;
        ++b.second;
    }
    double prev = -1;
    int checked = 0;
    for (const auto& [bin, acc] : bins) {
        if (acc.second < 100) continue;
        const double mean = acc.first / acc.second;
        CHECK(mean > prev);
        prev = mean;
        ++checked;
    }
    CHECK(checked >= 4);
}

TEST_CASE("synth configuration from keys") {
    std::istringstream in("seed = 99\nsynth.detector_ids = 191\nsynth.start_date = 2022-08-01\n"
                          "synth.end_date = 2022-08-03\nsynth.missing_rate = 0.05\n");
    auto cfg = synth_config_from(KeyValueConfig::parse(in));
    CHECK(cfg.seed == 99);
    CHECK(cfg.detector_ids == std::vector<int>{191});
    CHECK(cfg.start_date == make_date(2022, 8, 1));
    CHECK(cfg.missing_rate == 0.05);

    SynthConfig bad;
    bad.missing_rate = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = SynthConfig{};
    bad.end_date = make_date(2022, 6, 1);
    CHECK_THROWS_AS(generate(bad), Error);
}

TEST_CASE("linear split") {
    FeatureDataset ds;
    for (int i = 0; i < 10; ++i) ds.rows.push_back({7, 0, static_cast<double>(i), 0});
    auto [tr, te] = split_linear(ds, 0.8);
    CHECK(tr.size() == 8);
    CHECK(te.size() == 2);
    ds.rows.resize(5);
    auto [tr5, te5] = split_linear(ds, 0.8);
    CHECK(tr5.size() == 4);
    CHECK(te5.size() == 1);

    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        FeatureDataset d;
        const int n = 2 + static_cast<int>(rng() % 200);
        for (int i = 0; i < n; ++i) d.rows.push_back({7, 0, static_cast<double>(i), static_cast<double>(rng() % 9)});
        const double frac = 0.5 + 0.4 * static_cast<double>(rng() % 100) / 100.0;
        if (std::floor(n * frac) == 0 || std::floor(n * frac) == n) continue;
        auto [a, b] = split_linear(d, frac);
        auto joined = a.rows;
        joined.insert(joined.end(), b.rows.begin(), b.rows.end());
        CHECK(joined == d.rows);
    }

    FeatureDataset one;
    one.rows.push_back({7, 0, 1, 1});
    CHECK_THROWS_AS(split_linear(one, 0.8), Error);
    CHECK_THROWS_AS(split_linear(ds, 1.0), Error);
}

TEST_CASE("mlr on an exactly linear target is perfect") {
    ExperimentConfig cfg;
    auto out = run_interval(linear_cfd(500), ModelKind::Mlr, cfg);
    CHECK(out.report.r2 == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(out.report.mae <= 1e-8);
    CHECK(out.report.rmse <= 1e-8);
    CHECK(out.train_rows == 400);
    CHECK(out.test_rows == 100);
}

TEST_CASE("rf interval runs are deterministic and carry scaled errors") {
    ExperimentConfig cfg;
    cfg.rf_n_trees = 20;
    cfg.rf_tune_trees = 5;
    cfg.seed = 4;
    auto ds = linear_cfd(400);
    auto a = run_interval(ds, ModelKind::Rf, cfg);
    auto b = run_interval(ds, ModelKind::Rf, cfg);
    CHECK(metrics_csv_row(a.report) == metrics_csv_row(b.report));
    CHECK(a.report.scaled_mae == a.report.mae * 0.5 / 5);
    CHECK(a.report.scaled_rmse == a.report.rmse * 0.5 / 5);
    REQUIRE(a.rf);
    CHECK(a.rf->trees.size() == 20);
}

TEST_CASE("sweep over a synthetic fortnight") {
    auto series = interpolate_linear(pivot_by_detector(generate(small_config(14, 21)).samples).at(191));
    ExperimentConfig cfg;
    cfg.intervals = {15, 5, 10};
    cfg.rf_n_trees = 10;
    cfg.rf_tune_trees = 3;
    auto sr = run_sweep(series, cfg);
    REQUIRE(sr.cells.size() == 6);
    const double expected_T[] = {5, 10, 15};
    const int weekdays = oracle::count_weekdays({2022, 7, 25}, {2022, 8, 7});
    for (std::size_t i = 0; i < 6; ++i) {
        const auto& c = sr.cells[i];
        CHECK(c.model == (i < 3 ? ModelKind::Mlr : ModelKind::Rf));
        CHECK(c.interval.minutes() == expected_T[i % 3]);
        CHECK(c.report.n > 0);
        CHECK(c.train_rows + c.test_rows ==
              static_cast<std::size_t>(weekdays) * static_cast<std::size_t>(1440 / expected_T[i % 3]));
        REQUIRE(c.last_train);
        REQUIRE(c.first_test);
        CHECK(*c.last_train < *c.first_test);
        CHECK(c.rf_params.has_value() == (c.model == ModelKind::Rf));
    }

    const auto dir = std::filesystem::temp_directory_path() / "loopflow_sweep_test";
    std::filesystem::remove_all(dir);
    render_report(sr, dir);
    for (const char* f : {"sweep.csv", "mlr_mae_rmse.csv", "mlr_r2.csv", "mlr_scaled.csv", "rf_mae_rmse.csv",
                          "rf_r2.csv", "summary.txt", "config_echo.json", "rf_tuning_T5.csv"})
        CHECK(std::filesystem::exists(dir / f));
    CHECK(slurp(dir / "sweep.csv") == sweep_csv(sr));
    CHECK(slurp(dir / "mlr_r2.csv").rfind("interval_min,value\n", 0) == 0);
    CHECK(slurp(dir / "mlr_scaled.csv").rfind("interval_min,value,metric\n", 0) == 0);

    // The summary's best intervals agree with a recomputation from the parsed csv.
    std::istringstream in(sweep_csv(sr));
    auto parsed = parse_sweep_csv(in);
    REQUIRE(parsed.cells.size() == 6);
    const auto summary = sweep_summary(sr);
    for (auto kind : {ModelKind::Mlr, ModelKind::Rf}) {
        const SweepCell* best_r2 = nullptr;
        const SweepCell* best_scaled = nullptr;
        for (const auto& c : parsed.cells) {
            if (c.model != kind) continue;
            if (!best_r2 || c.report.r2 > best_r2->report.r2) best_r2 = &c;
            if (!best_scaled || c.report.scaled_mae < best_scaled->report.scaled_mae) best_scaled = &c;
        }
        const auto block = summary.substr(summary.find(model_name(kind) + ":"));
        CHECK(block.find("best R2 interval: " + format_minutes(best_r2->report.interval_min) + " min") !=
              std::string::npos);
        CHECK(block.find("best scaled MAE interval: " + format_minutes(best_scaled->report.interval_min) +
                         " min") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("a single interval sweep has one cell per model") {
    auto series = interpolate_linear(pivot_by_detector(generate(small_config(10, 2)).samples).at(191));
    ExperimentConfig cfg;
    cfg.intervals = {15};
    cfg.rf_n_trees = 5;
    cfg.rf_tune_trees = 2;
    CHECK(run_sweep(series, cfg).cells.size() == 2);
}

TEST_CASE("experiment configuration keys") {
    std::istringstream in("input_path = data.csv\nintervals = 1, 5\nmodels = rf\nseed = 3\n"
                          "rf.search = exhaustive\nsynth.lanes = 2\n");
    auto cfg = ExperimentConfig::from(KeyValueConfig::parse(in));
    CHECK(cfg.input_path == "data.csv");
    CHECK(cfg.intervals == std::vector<double>{1, 5});
    CHECK(cfg.models == std::vector<ModelKind>{ModelKind::Rf});
    CHECK(cfg.rf_exhaustive);
    CHECK(cfg.seed == 3);

    std::istringstream unknown("bogus = 1\n");
    CHECK_THROWS_WITH_AS(ExperimentConfig::from(KeyValueConfig::parse(unknown)), doctest::Contains("bogus"),
                         Error);
    std::istringstream bad_t("intervals = 7\n");
    CHECK_THROWS_WITH_AS(ExperimentConfig::from(KeyValueConfig::parse(bad_t)),
                         doctest::Contains("unsupported interval"), Error);
}
