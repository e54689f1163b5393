#include "loopflow/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <random>
#include <thread>

#include "loopflow/config.hpp"
#include "loopflow/features.hpp"
#include "loopflow/format.hpp"

namespace loopflow {

void SynthConfig::validate() const {
    if (!start_date.ok() || !end_date.ok()) throw Error("synth: invalid date");
    if (days_between(start_date, end_date) < 0) throw Error("synth: start_date is after end_date");
    if (detector_ids.empty()) throw Error("synth: no detector ids");
    if (lanes < 1) throw Error("synth: lanes must be at least 1");
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw Error("synth: missing_rate must be in [0, 1)");
    if (!(burst_mean_length >= 1.0)) throw Error("synth: burst_mean_length must be >= 1");
    if (!(night_volume > 0.0) || day_volume < 0.0 || morning_peak_volume < 0.0 ||
        evening_peak_volume < 0.0 || !(peak_width_hours > 0.0) || weekend_level < 0.0)
        throw Error("synth: diurnal curve parameters out of range");
    if (fluctuation_sd < 0.0 || !(fluctuation_corr >= 0.0 && fluctuation_corr < 1.0) || day_level_sd < 0.0)
        throw Error("synth: fluctuation parameters out of range");
    if (!(free_flow_dwell > 0.0) || !(congestion_volume > 0.0) || occupancy_noise_sd < 0.0)
        throw Error("synth: occupancy parameters out of range");
    auto ids = detector_ids;
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw Error("synth: duplicate detector id");
}

SynthConfig synth_config_from(const KeyValueConfig& cfg) {
    SynthConfig c;
    c.start_date = cfg.get_date("synth.start_date", c.start_date);
    c.end_date = cfg.get_date("synth.end_date", c.end_date);
    c.detector_ids = cfg.get_ints("synth.detector_ids", c.detector_ids);
    c.lanes = static_cast<int>(cfg.get_int("synth.lanes", c.lanes));
    c.missing_rate = cfg.get_double("synth.missing_rate", c.missing_rate);
    c.burst_mean_length = cfg.get_double("synth.burst_mean_length", c.burst_mean_length);
    c.seed = cfg.get_u64("seed", c.seed);
    c.morning_peak_hour = cfg.get_double("synth.morning_peak_hour", c.morning_peak_hour);
    c.evening_peak_hour = cfg.get_double("synth.evening_peak_hour", c.evening_peak_hour);
    c.peak_width_hours = cfg.get_double("synth.peak_width_hours", c.peak_width_hours);
    c.night_volume = cfg.get_double("synth.night_volume", c.night_volume);
    c.day_volume = cfg.get_double("synth.day_volume", c.day_volume);
    c.morning_peak_volume = cfg.get_double("synth.morning_peak_volume", c.morning_peak_volume);
    c.evening_peak_volume = cfg.get_double("synth.evening_peak_volume", c.evening_peak_volume);
    c.weekend_level = cfg.get_double("synth.weekend_level", c.weekend_level);
    c.fluctuation_sd = cfg.get_double("synth.fluctuation_sd", c.fluctuation_sd);
    c.fluctuation_corr = cfg.get_double("synth.fluctuation_corr", c.fluctuation_corr);
    c.day_level_sd = cfg.get_double("synth.day_level_sd", c.day_level_sd);
    c.free_flow_dwell = cfg.get_double("synth.free_flow_dwell", c.free_flow_dwell);
    c.congestion_volume = cfg.get_double("synth.congestion_volume", c.congestion_volume);
    c.occupancy_noise_sd = cfg.get_double("synth.occupancy_noise_sd", c.occupancy_noise_sd);
    c.validate();
    return c;
}

namespace {

std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double bump(double h, double centre, double width) {
    const double d = (h - centre) / width;
    return std::exp(-0.5 * d * d);
}

// Expected per-lane volume per 30 s at hour-of-day h, before lane share and day level.
double diurnal_mean(const SynthConfig& c, double h, bool weekday) {
    const double span = c.day_volume - c.night_volume;
    if (weekday) {
        const double daytime = logistic((h - 5.5) / 0.6) * logistic((21.5 - h) / 1.0);
        return c.night_volume + span * daytime +
               c.morning_peak_volume * bump(h, c.morning_peak_hour, c.peak_width_hours) +
               c.evening_peak_volume * bump(h, c.evening_peak_hour, c.peak_width_hours);
    }
    const double daytime = logistic((h - 7.5) / 0.9) * logistic((22.0 - h) / 1.0);
    const double midday = 0.2 * (c.morning_peak_volume + c.evening_peak_volume) * bump(h, 13.5, 2.5);
    return c.night_volume + c.weekend_level * (span * daytime + midday);
}

double dwell(const SynthConfig& c, double lane_volume) {
    const double load = lane_volume / c.congestion_volume;
    return c.free_flow_dwell * (1.0 + load * load * load * load);
}

struct DayBlock {
    std::vector<RawSample> samples;
    std::vector<bool> blanked;
    std::vector<SlotTotals> truth;
    double vol_sq = 0.0;
    double occ_sq = 0.0;
};

DayBlock generate_day(const SynthConfig& c, int detector, Date date) {
    const std::uint64_t stream =
        mix(mix(mix(c.seed) ^ static_cast<std::uint64_t>(detector)) ^
            static_cast<std::uint64_t>(days_between(make_date(1970, 1, 1), date)));
    std::mt19937_64 gen(stream);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const double detector_level = 0.9 + 0.2 * static_cast<double>(mix(static_cast<std::uint64_t>(detector)) >> 11) * 0x1.0p-53;
    const double day_level = detector_level * std::exp(c.day_level_sd * normal(gen));
    const bool weekday = is_weekday(date);
    const auto lanes = static_cast<std::size_t>(c.lanes);

    std::vector<double> share(lanes);
    for (std::size_t l = 0; l < lanes; ++l)
        share[l] = 1.0 + 0.15 * ((static_cast<double>(lanes) - 1.0) / 2.0 - static_cast<double>(l));

    const double s = c.fluctuation_sd, rho = c.fluctuation_corr;
    const double innovation = s * std::sqrt(1.0 - rho * rho);
    double z = s * normal(gen);

    DayBlock block;
    block.samples.resize(kSlotsPerDay);
    block.blanked.assign(kSlotsPerDay, false);
    block.truth.resize(kSlotsPerDay);

    for (int slot = 0; slot < kSlotsPerDay; ++slot) {
        if (slot > 0) z = rho * z + innovation * normal(gen);
        const double hour = (slot + 0.5) * kSlotSeconds / 3600.0;
        const double base = diurnal_mean(c, hour, weekday) * day_level;
        const double fluct = std::exp(z - 0.5 * s * s);

        RawSample& r = block.samples[static_cast<std::size_t>(slot)];
        r.date = date;
        r.time_end = (slot + 1) * kSlotSeconds;
        r.detector_id = detector;
        double expected_vol = 0.0, expected_occ = 0.0, lambda_total = 0.0;
        for (std::size_t l = 0; l < lanes; ++l) {
            const double mean_l = base * share[l];
            const double lambda = std::max(mean_l * fluct, 1e-9);
            const auto vol = std::poisson_distribution<std::int64_t>(lambda)(gen);
            const double noise = std::exp(c.occupancy_noise_sd * normal(gen));
            const auto occ = std::min<std::int64_t>(
                kMaxSlotOccupancy,
                std::llround(static_cast<double>(vol) * dwell(c, lambda) * noise));
            r.lane_volumes.push_back(vol);
            r.lane_occupancies.push_back(occ);
            expected_vol += mean_l;
            expected_occ += mean_l * dwell(c, mean_l);
            lambda_total += lambda;
        }
        r.off_counts = {std::poisson_distribution<std::int64_t>(0.05 * lambda_total + 0.05)(gen)};
        r.psg_counts = {std::poisson_distribution<std::int64_t>(0.02 * lambda_total + 0.02)(gen)};

        const SlotTotals t = aggregate_lanes(r);
        block.truth[static_cast<std::size_t>(slot)] = t;
        block.vol_sq += (t.volume - expected_vol) * (t.volume - expected_vol);
        block.occ_sq += (t.occupancy - expected_occ) * (t.occupancy - expected_occ);
    }

    // Holes come from a separate stream so the missing rate does not perturb the values.
    std::mt19937_64 holes(mix(stream ^ 0x5bd1e995ULL));
    if (c.missing_rate > 0.0) {
        if (c.burst_mean_length <= 1.0) {
            for (int slot = 0; slot < kSlotsPerDay; ++slot)
                block.blanked[static_cast<std::size_t>(slot)] = unit(holes) < c.missing_rate;
        } else {
            const double start_p = c.missing_rate / (c.burst_mean_length * (1.0 - c.missing_rate));
            const double continue_p = 1.0 - 1.0 / c.burst_mean_length;
            bool in_burst = false;
            for (int slot = 0; slot < kSlotsPerDay; ++slot) {
                in_burst = in_burst ? unit(holes) < continue_p : unit(holes) < start_p;
                block.blanked[static_cast<std::size_t>(slot)] = in_burst;
            }
        }
    }
    for (int slot = 0; slot < kSlotsPerDay; ++slot) {
        if (!block.blanked[static_cast<std::size_t>(slot)]) continue;
        auto& r = block.samples[static_cast<std::size_t>(slot)];
        r.missing = true;
        r.lane_volumes.clear();
        r.lane_occupancies.clear();
    }
    return block;
}

}  // namespace

SynthOutput generate(const SynthConfig& cfg, unsigned threads) {
    cfg.validate();
    const auto days = static_cast<std::size_t>(days_between(cfg.start_date, cfg.end_date) + 1);
    const auto detectors = cfg.detector_ids.size();

    std::vector<DayBlock> blocks(days * detectors);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t b; (b = next++) < blocks.size();) {
            const auto day = b / detectors, det = b % detectors;
            blocks[b] = generate_day(cfg, cfg.detector_ids[det], add_days(cfg.start_date, static_cast<long>(day)));
        }
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < std::max(1u, threads); ++t) pool.emplace_back(worker);
        worker();
    }

    SynthOutput out;
    out.layout = {static_cast<std::size_t>(cfg.lanes), 1, 1};
    out.samples.reserve(blocks.size() * kSlotsPerDay);
    double vol_sq = 0.0, occ_sq = 0.0;
    for (std::size_t day = 0; day < days; ++day) {
        for (std::size_t slot = 0; slot < static_cast<std::size_t>(kSlotsPerDay); ++slot) {
            for (std::size_t det = 0; det < detectors; ++det) {
                auto& block = blocks[day * detectors + det];
                auto& sample = block.samples[slot];
                if (block.blanked[slot])
                    out.truth.push_back({sample.detector_id, sample.date, sample.time_end,
                                         block.truth[slot].volume, block.truth[slot].occupancy});
                out.samples.push_back(std::move(sample));
            }
        }
        for (std::size_t det = 0; det < detectors; ++det) {
            vol_sq += blocks[day * detectors + det].vol_sq;
            occ_sq += blocks[day * detectors + det].occ_sq;
            blocks[day * detectors + det] = {};
        }
    }
    const double slots = static_cast<double>(out.samples.size());
    out.volume_noise_sd = std::sqrt(vol_sq / slots);
    out.occupancy_noise_sd = std::sqrt(occ_sq / slots);
    return out;
}

void write_truth_csv(std::ostream& out, std::span<const TruthRecord> truth, TimeLabel label) {
    out << "detector_id,date,time,true_vol,true_occ\n";
    for (const auto& t : truth) {
        Date date = t.date;
        int clock = t.time_end;
        if (label == TimeLabel::IntervalStart) {
            clock -= kSlotSeconds;
        } else if (clock == kSecondsPerDay) {
            date = add_days(date, 1);
            clock = 0;
        }
        out << t.detector_id << ',' << format_date(date) << ',' << format_clock(clock) << ','
            << format_real(t.true_vol) << ',' << format_real(t.true_occ) << '\n';
    }
}

}  // namespace loopflow
