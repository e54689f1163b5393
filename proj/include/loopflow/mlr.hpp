#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "loopflow/core.hpp"
#include "loopflow/matrix.hpp"

namespace loopflow {

/// The design matrix has linearly dependent columns.
class SingularDesignError : public Error {
public:
    SingularDesignError(const std::string& msg, std::vector<std::string> columns)
        : Error(msg), dependent_columns(std::move(columns)) {}
    std::vector<std::string> dependent_columns;
};

/// Relative pivot threshold below which the design is declared rank deficient.
inline constexpr double kRankTolerance = 1e-10;

struct MlrModel {
    /// Intercept first, then one slope per feature.
    std::vector<double> coefficients;
    std::vector<std::string> feature_names;
    std::size_t training_rows = 0;

    std::size_t features() const { return feature_names.size(); }
};

/// Ordinary least squares with an intercept, solved by column-pivoted Householder QR.
/// `feature_names` defaults to x1..xk.
MlrModel fit_mlr(const Matrix& x, std::span<const double> y,
                 std::vector<std::string> feature_names = {});

double predict_mlr(const MlrModel& m, std::span<const double> x);
std::vector<double> predict_mlr(const MlrModel& m, const Matrix& x);

nlohmann::ordered_json mlr_to_json(const MlrModel& m);
MlrModel mlr_from_json(const nlohmann::ordered_json& j);

}  // namespace loopflow
