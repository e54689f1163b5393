#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "loopflow/core.hpp"
#include "loopflow/matrix.hpp"

namespace loopflow {

struct RfHyperparams {
    int n_trees = 500;
    int min_leaf = 3;
    int max_depth = 20;
    std::uint64_t seed = 0;
    bool bootstrap = true;

    friend bool operator==(const RfHyperparams&, const RfHyperparams&) = default;
};

/// Flat tree node. `feature < 0` marks a leaf; otherwise rows with x[feature] <= threshold go
/// to `left`.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    /// Mean target of the training samples reaching the node.
    double value = 0.0;
    /// Training samples reaching the node, bootstrap duplicates included.
    std::size_t count = 0;

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Nodes in pre-order; nodes[0] is the root.
struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const;
    int depth() const;
    friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

/// Training matrix in column layout with each feature's rows presorted by value.
class TrainingSet {
public:
    TrainingSet(const Matrix& x, std::span<const double> y);

    std::size_t rows() const { return y_.size(); }
    std::size_t features() const { return columns_.size(); }
    double value(std::size_t feature, std::uint32_t row) const { return columns_[feature][row]; }
    std::span<const double> column(std::size_t feature) const { return columns_[feature]; }
    std::span<const double> targets() const { return y_; }
    /// Row ids ordered by ascending feature value, ties by ascending row id.
    std::span<const std::uint32_t> sorted(std::size_t feature) const { return sorted_[feature]; }
    /// Feature values and targets laid out in `sorted(feature)` order.
    std::span<const double> sorted_values(std::size_t feature) const { return sorted_x_[feature]; }
    std::span<const double> sorted_targets(std::size_t feature) const { return sorted_y_[feature]; }

private:
    std::vector<std::vector<double>> columns_;
    std::vector<double> y_;
    std::vector<std::vector<std::uint32_t>> sorted_;
    std::vector<std::vector<double>> sorted_x_;
    std::vector<std::vector<double>> sorted_y_;
};

/// Splits whose variance reductions differ by less than this fraction of the node's sum of
/// squares are ties; the first one in (feature, threshold) order wins.
inline constexpr double kSplitTieTolerance = 1e-10;

/// Grows one CART regression tree on `row_indices` (repeats count as duplicate samples).
/// Each node takes the split minimizing the summed child squared error among midpoints of
/// consecutive distinct values that leave at least min_leaf samples per side; it stays a
/// leaf at max_depth, when no such split exists, or when its targets are constant.
RegressionTree fit_tree(const TrainingSet& data, const RfHyperparams& params,
                        std::span<const std::uint32_t> row_indices);
RegressionTree fit_tree(const Matrix& x, std::span<const double> y, const RfHyperparams& params);

struct RfModel {
    std::vector<RegressionTree> trees;
    RfHyperparams hyperparams;
    std::vector<std::string> feature_names;
};

/// Seed of tree `index`'s private random stream.
std::uint64_t tree_stream_seed(std::uint64_t seed, std::size_t index);

/// The sample indices tree `index` trains on: a bootstrap resample (n draws with
/// replacement) from its private stream, or every row when bootstrap is off.
std::vector<std::uint32_t> tree_rows(std::size_t n, const RfHyperparams& params, std::size_t index);

/// Trains params.n_trees trees on up to `threads` workers. The result does not depend on
/// the thread count.
RfModel fit_forest(const TrainingSet& data, const RfHyperparams& params,
                   std::vector<std::string> feature_names = {}, unsigned threads = 1);
RfModel fit_forest(const Matrix& x, std::span<const double> y, const RfHyperparams& params,
                   std::vector<std::string> feature_names = {}, unsigned threads = 1);

/// Mean of the tree predictions.
double predict_forest(const RfModel& m, std::span<const double> x);
std::vector<double> predict_forest(const RfModel& m, const Matrix& x);

nlohmann::ordered_json tree_to_json(const RegressionTree& t);
RegressionTree tree_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json rf_to_json(const RfModel& m);
RfModel rf_from_json(const nlohmann::ordered_json& j);

// ---------------------------------------------------------------------------
// Hyperparameter search

struct SearchOptions {
    int min_depth = 2, max_depth = 20;
    int min_leaf = 3, max_leaf = 25;
    /// Consecutive non-improving steps tolerated within a depth row and across rows.
    int patience = 3;
    bool exhaustive = false;
};

struct TuneStep {
    int max_depth = 0;
    int min_leaf = 0;
    double val_rmse = 0.0;
};

struct SearchResult {
    int max_depth = 0;
    int min_leaf = 0;
    double val_rmse = 0.0;
    std::vector<TuneStep> trace;
    bool stopped_early = false;
};

/// Walks max_depth ascending (outer) and min_leaf ascending (inner). In early-stopping mode
/// a row ends after `patience` consecutive steps that do not beat the row's best, and the
/// search ends after `patience` consecutive rows that do not beat the overall best. The
/// minimum is returned, ties going to smaller max_depth, then larger min_leaf.
SearchResult search_grid(const std::function<double(int max_depth, int min_leaf)>& evaluate,
                         const SearchOptions& opts);

struct TuneOptions {
    SearchOptions search;
    int tune_trees = 50;
    std::uint64_t seed = 0;
    double inner_train_fraction = 0.8;
    unsigned threads = 1;
};

inline constexpr std::size_t kMinTuneRows = 50;

struct TuneResult {
    RfHyperparams best;
    SearchResult search;
};

/// Chronological inner split of (x, y): the first 80% trains, the rest validates. The
/// returned hyperparams carry `final_trees` trees and the tuning seed.
TuneResult tune_hyperparams(const Matrix& x, std::span<const double> y, const TuneOptions& opts,
                            int final_trees = 500);

}  // namespace loopflow
