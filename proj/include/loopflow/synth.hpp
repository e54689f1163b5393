#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "loopflow/core.hpp"
#include "loopflow/ingest.hpp"

namespace loopflow {

class KeyValueConfig;

struct SynthConfig {
    Date start_date = make_date(2022, 7, 1);
    Date end_date = make_date(2022, 11, 30);
    std::vector<int> detector_ids{66, 191, 192, 193, 270};
    int lanes = 3;
    double missing_rate = 0.0114;
    /// Mean run length of blanked slots; 1 gives independent uniform holes.
    double burst_mean_length = 1.0;
    std::uint64_t seed = 1;

    // Diurnal curve, per-lane vehicles per 30 s.
    double morning_peak_hour = 7.5;
    double evening_peak_hour = 17.0;
    double peak_width_hours = 1.2;
    double night_volume = 0.6;
    double day_volume = 6.0;
    double morning_peak_volume = 4.5;
    double evening_peak_volume = 5.0;
    double weekend_level = 0.7;

    /// Log-scale demand fluctuation: stationary SD and 30 s autocorrelation.
    double fluctuation_sd = 0.25;
    double fluctuation_corr = 0.95;
    double day_level_sd = 0.05;

    /// Occupancy samples per vehicle at free flow, and the per-lane 30 s volume at which
    /// congestion doubles it.
    double free_flow_dwell = 5.5;
    double congestion_volume = 11.0;
    double occupancy_noise_sd = 0.08;

    void validate() const;
};

/// Reads `synth.*` keys and `seed`; absent keys keep their defaults.
SynthConfig synth_config_from(const KeyValueConfig& cfg);

struct TruthRecord {
    int detector_id = 0;
    Date date{};
    int time_end = 0;
    double true_vol = 0.0;
    double true_occ = 0.0;
};

struct SynthOutput {
    /// Ordered by (date, time, detector).
    std::vector<RawSample> samples;
    /// One entry per blanked slot, same order.
    std::vector<TruthRecord> truth;
    CsvLayout layout;
    /// Realized RMS deviation of lane-summed volume/occupancy from the expected curve.
    double volume_noise_sd = 0.0;
    double occupancy_noise_sd = 0.0;
};

SynthOutput generate(const SynthConfig& cfg, unsigned threads = 1);

/// `detector_id,date,time,true_vol,true_occ` with Date/Time as in the data file.
void write_truth_csv(std::ostream& out, std::span<const TruthRecord> truth,
                     TimeLabel label = TimeLabel::IntervalEnd);

}  // namespace loopflow
