#include "loopflow/metrics.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "loopflow/format.hpp"

namespace loopflow {

namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat, std::size_t min_len,
                const char* what) {
    if (y.size() != yhat.size())
        throw Error(std::string(what) + ": length mismatch (" + std::to_string(y.size()) + " vs " +
                    std::to_string(yhat.size()) + ")");
    if (y.size() < min_len)
        throw Error(std::string(what) + ": needs at least " + std::to_string(min_len) +
                    " value(s)");
}

}  // namespace

double r_squared(std::span<const double> y, std::span<const double> yhat) {
    check_pair(y, yhat, 2, "r_squared");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());

    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    if (ss_tot == 0.0) throw Error("r_squared: target is constant, variance undefined");
    return 1.0 - ss_res / ss_tot;
}

double mae(std::span<const double> y, std::span<const double> yhat) {
    check_pair(y, yhat, 1, "mae");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(y[i] - yhat[i]);
    return sum / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> yhat) {
    check_pair(y, yhat, 1, "rmse");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return std::sqrt(sum / static_cast<double>(y.size()));
}

double scale_error(double err, double interval_minutes) {
    if (!(interval_minutes > 0.0))
        throw Error("scale_error: interval must be positive, got " + format_real(interval_minutes));
    if (err < 0.0) throw Error("scale_error: error must be non-negative");
    if (interval_minutes == kNativeIntervalMin) return err;
    return err * kNativeIntervalMin / interval_minutes;
}

MetricsReport evaluate(std::string model, CollectionInterval interval, std::span<const double> y,
                       std::span<const double> yhat) {
    MetricsReport r;
    r.model = std::move(model);
    r.interval_min = interval.minutes();
    r.n = y.size();
    r.r2 = r_squared(y, yhat);
    r.mae = mae(y, yhat);
    r.rmse = rmse(y, yhat);
    r.scaled_mae = scale_error(r.mae, r.interval_min);
    r.scaled_rmse = scale_error(r.rmse, r.interval_min);
    return r;
}

std::string metrics_csv_header() { return "model,interval_min,n,r2,mae,rmse,scaled_mae,scaled_rmse"; }

std::string metrics_csv_row(const MetricsReport& r) {
    std::ostringstream os;
    os << r.model << ',' << format_minutes(r.interval_min) << ',' << r.n << ',' << format_real(r.r2)
       << ',' << format_real(r.mae) << ',' << format_real(r.rmse) << ','
       << format_real(r.scaled_mae) << ',' << format_real(r.scaled_rmse);
    return os.str();
}

MetricsReport parse_metrics_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw Error("metrics row has " + std::to_string(cells.size()) +
                                       " cells, expected 8: '" + line + "'");
    MetricsReport r;
    r.model = cells[0];
    double n = 0;
    double* fields[] = {&r.interval_min, &n, &r.r2, &r.mae, &r.rmse, &r.scaled_mae, &r.scaled_rmse};
    for (std::size_t i = 0; i < 7; ++i)
        if (!parse_real(cells[i + 1], *fields[i])) throw Error("bad metrics cell '" + cells[i + 1] + "'");
    r.n = static_cast<std::size_t>(n);
    return r;
}

}  // namespace loopflow
