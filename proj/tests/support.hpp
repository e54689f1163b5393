#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "loopflow/core.hpp"
#include "loopflow/ingest.hpp"

namespace testing_support {

using namespace loopflow;

/// Complete 30 s series starting at midnight of `start`, volumes and occupancies given.
inline DetectorSeries make_series(Date start, const std::vector<double>& vol,
                                  const std::vector<double>& occ, int id = 191) {
    DetectorSeries s;
    s.detector_id = id;
    s.start = {start, 0};
    for (std::size_t i = 0; i < vol.size(); ++i) s.samples.push_back({vol[i], occ[i]});
    return s;
}

/// Integer-valued random series covering `days` whole days.
inline DetectorSeries random_series(Date start, int days, std::uint64_t seed, int id = 191) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> v(0, 40), o(0, 300);
    std::vector<double> vol, occ;
    for (int i = 0; i < days * kSlotsPerDay; ++i) {
        vol.push_back(v(rng));
        occ.push_back(o(rng));
    }
    return make_series(start, vol, occ, id);
}

inline RawSample sample(Date d, int time_end, int id, std::vector<std::int64_t> vol,
                        std::vector<std::int64_t> occ) {
    RawSample s;
    s.date = d;
    s.time_end = time_end;
    s.detector_id = id;
    s.lane_volumes = std::move(vol);
    s.lane_occupancies = std::move(occ);
    return s;
}

inline ParseResult parse_text(const std::string& text, const ParseOptions& opts = {}) {
    std::istringstream in(text);
    return parse_raw_csv(in, opts);
}

}  // namespace testing_support
