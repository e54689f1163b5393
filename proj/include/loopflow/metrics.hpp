#pragma once

#include <span>
#include <string>

#include "loopflow/core.hpp"

namespace loopflow {

/// R^2 = 1 - SS_res / SS_tot. Throws on length mismatch, fewer than two points, or constant y.
double r_squared(std::span<const double> y, std::span<const double> yhat);
double mae(std::span<const double> y, std::span<const double> yhat);
double rmse(std::span<const double> y, std::span<const double> yhat);

/// Expresses an error measured at interval T per native 30 s slot: err * 0.5 / T.
double scale_error(double err, double interval_minutes);

struct MetricsReport {
    std::string model;
    double interval_min = kNativeIntervalMin;
    std::size_t n = 0;
    double r2 = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    double scaled_mae = 0.0;
    double scaled_rmse = 0.0;
};

MetricsReport evaluate(std::string model, CollectionInterval interval, std::span<const double> y,
                       std::span<const double> yhat);

/// `model,interval_min,n,r2,mae,rmse,scaled_mae,scaled_rmse`
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& r);
MetricsReport parse_metrics_csv_row(const std::string& line);

}  // namespace loopflow
