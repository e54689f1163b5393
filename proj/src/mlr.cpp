#include "loopflow/mlr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace loopflow {

MlrModel fit_mlr(const Matrix& x, std::span<const double> y, std::vector<std::string> feature_names) {
    const std::size_t n = x.rows();
    const std::size_t k = x.cols();
    const std::size_t p = k + 1;
    if (y.size() != n)
        throw Error("fit_mlr: " + std::to_string(n) + " rows but " + std::to_string(y.size()) +
                    " targets");
    if (n < p)
        throw Error("fit_mlr: insufficient data, " + std::to_string(n) + " rows for " +
                    std::to_string(p) + " coefficients");
    if (feature_names.empty())
        for (std::size_t j = 0; j < k; ++j) feature_names.push_back("x" + std::to_string(j + 1));
    if (feature_names.size() != k) throw Error("fit_mlr: feature name count does not match columns");

    // Column-major working copy of [1 | X].
    std::vector<std::vector<double>> a(p, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        a[0][i] = 1.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (!std::isfinite(x(i, j))) throw Error("fit_mlr: non-finite feature value");
            a[j + 1][i] = x(i, j);
        }
    }
    // A constant feature duplicates the intercept; name it rather than whichever of the two
    // the pivoting happens to leave behind.
    for (std::size_t j = 0; j < k; ++j) {
        const auto& col = a[j + 1];
        if (std::all_of(col.begin(), col.end(), [&](double v) { return v == col.front(); }))
            throw SingularDesignError("fit_mlr: design matrix is rank deficient; column " + feature_names[j] +
                                          " is constant and collinear with the intercept",
                                      {feature_names[j], "intercept"});
    }

    std::vector<double> qty(y.begin(), y.end());
    for (double v : qty)
        if (!std::isfinite(v)) throw Error("fit_mlr: non-finite target value");

    std::vector<std::size_t> perm(p);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> diag(p);
    double largest_pivot = 0.0;

    for (std::size_t j = 0; j < p; ++j) {
        std::size_t best = j;
        double best_norm = -1.0;
        for (std::size_t c = j; c < p; ++c) {
            double s = 0.0;
            for (std::size_t i = j; i < n; ++i) s += a[c][i] * a[c][i];
            if (s > best_norm) {
                best_norm = s;
                best = c;
            }
        }
        std::swap(a[j], a[best]);
        std::swap(perm[j], perm[best]);

        const double norm = std::sqrt(best_norm);
        if (j == 0) largest_pivot = norm;
        if (norm <= kRankTolerance * largest_pivot) {
            std::vector<std::string> dependent;
            std::string msg = "fit_mlr: design matrix is rank deficient; dependent column(s):";
            for (std::size_t c = j; c < p; ++c) {
                dependent.push_back(perm[c] == 0 ? "intercept" : feature_names[perm[c] - 1]);
                msg += " " + dependent.back();
            }
            throw SingularDesignError(msg, std::move(dependent));
        }

        auto& col = a[j];
        const double alpha = col[j] > 0 ? -norm : norm;
        std::vector<double> v(col.begin() + static_cast<std::ptrdiff_t>(j), col.end());
        v[0] -= alpha;
        double vv = 0.0;
        for (double e : v) vv += e * e;
        diag[j] = alpha;
        if (vv == 0.0) continue;

        auto reflect = [&](std::vector<double>& target) {
            double dot = 0.0;
            for (std::size_t i = j; i < n; ++i) dot += v[i - j] * target[i];
            const double f = 2.0 * dot / vv;
            for (std::size_t i = j; i < n; ++i) target[i] -= f * v[i - j];
        };
        for (std::size_t c = j + 1; c < p; ++c) reflect(a[c]);
        reflect(qty);
    }

    // Back substitution on R (upper triangle lives in a[c][r] for r < c, diagonal in diag).
    std::vector<double> beta_perm(p);
    for (std::size_t jj = p; jj-- > 0;) {
        double s = qty[jj];
        for (std::size_t c = jj + 1; c < p; ++c) s -= a[c][jj] * beta_perm[c];
        beta_perm[jj] = s / diag[jj];
    }

    MlrModel m;
    m.coefficients.assign(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) m.coefficients[perm[j]] = beta_perm[j];
    m.feature_names = std::move(feature_names);
    m.training_rows = n;
    return m;
}

double predict_mlr(const MlrModel& m, std::span<const double> x) {
    if (x.size() != m.features())
        throw Error("predict_mlr: expected " + std::to_string(m.features()) + " features, got " +
                    std::to_string(x.size()));
    double s = m.coefficients[0];
    for (std::size_t j = 0; j < x.size(); ++j) s += m.coefficients[j + 1] * x[j];
    return s;
}

std::vector<double> predict_mlr(const MlrModel& m, const Matrix& x) {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict_mlr(m, x.row(i));
    return out;
}

nlohmann::ordered_json mlr_to_json(const MlrModel& m) {
    nlohmann::ordered_json j;
    j["type"] = "mlr";
    j["features"] = m.feature_names;
    j["coefficients"] = m.coefficients;
    j["training_rows"] = m.training_rows;
    return j;
}

MlrModel mlr_from_json(const nlohmann::ordered_json& j) {
    if (j.value("type", "") != "mlr") throw Error("not an mlr model");
    MlrModel m;
    m.feature_names = j.at("features").get<std::vector<std::string>>();
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    m.training_rows = j.value("training_rows", std::size_t{0});
    if (m.coefficients.size() != m.feature_names.size() + 1)
        throw Error("mlr model: coefficient count must be feature count + 1");
    return m;
}

}  // namespace loopflow
