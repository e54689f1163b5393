#include "loopflow/rf.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "loopflow/metrics.hpp"

namespace loopflow {

double RegressionTree::predict(std::span<const double> x) const {
    const TreeNode* node = &nodes.front();
    while (!node->is_leaf()) {
        node = &nodes[static_cast<std::size_t>(
            x[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left : node->right)];
    }
    return node->value;
}

int RegressionTree::depth() const {
    int deepest = 0;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [idx, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        const auto& n = nodes[static_cast<std::size_t>(idx)];
        if (!n.is_leaf()) {
            stack.emplace_back(n.left, d + 1);
            stack.emplace_back(n.right, d + 1);
        }
    }
    return deepest;
}

TrainingSet::TrainingSet(const Matrix& x, std::span<const double> y)
    : columns_(x.cols(), std::vector<double>(x.rows())),
      y_(y.begin(), y.end()),
      sorted_(x.cols()),
      sorted_x_(x.cols()),
      sorted_y_(x.cols()) {
    if (y.size() != x.rows())
        throw Error("training set: " + std::to_string(x.rows()) + " rows but " +
                    std::to_string(y.size()) + " targets");
    if (x.rows() > std::numeric_limits<std::uint32_t>::max()) throw Error("training set too large");
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t f = 0; f < x.cols(); ++f) {
            if (!std::isfinite(x(i, f))) throw Error("training set: non-finite feature value");
            columns_[f][i] = x(i, f);
        }
    for (double v : y_)
        if (!std::isfinite(v)) throw Error("training set: non-finite target value");

    for (std::size_t f = 0; f < x.cols(); ++f) {
        auto& order = sorted_[f];
        order.resize(x.rows());
        std::iota(order.begin(), order.end(), 0u);
        const auto& col = columns_[f];
        std::stable_sort(order.begin(), order.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
        sorted_x_[f].reserve(order.size());
        sorted_y_[f].reserve(order.size());
        for (auto r : order) {
            sorted_x_[f].push_back(col[r]);
            sorted_y_[f].push_back(y_[r]);
        }
    }
}

namespace {

// Node ranges index into k+1 parallel entry lists: one per feature, kept sorted by that
// feature, and one (the last) kept in ascending row id order. Splitting partitions every list
// stably. Entries carry their value, target and weight so scans stay sequential.
struct Entry {
    double x;
    double y;
    std::uint32_t w;
    std::uint32_t row;
};

// Buffers reused by consecutive trees on the same thread.
struct Workspace {
    std::vector<std::uint32_t> weight;
    std::vector<std::uint8_t> goes_left;
    std::vector<std::vector<Entry>> lists;
    std::vector<Entry> scratch;
};

class TreeBuilder {
public:
    TreeBuilder(const TrainingSet& data, const RfHyperparams& params,
                std::span<const std::uint32_t> rows, Workspace& ws)
        : params_(params), goes_left_(ws.goes_left), lists_(ws.lists), scratch_(ws.scratch) {
        auto& weight = ws.weight;
        weight.assign(data.rows(), 0);
        for (auto r : rows) {
            if (r >= data.rows()) throw Error("fit_tree: row index out of range");
            ++weight[r];
        }
        goes_left_.assign(data.rows(), 0);
        const auto y = data.targets();
        const std::size_t k = data.features();
        lists_.resize(k + 1);
        for (std::size_t f = 0; f < k; ++f) {
            auto& list = lists_[f];
            list.clear();
            const auto ids = data.sorted(f);
            const auto xs = data.sorted_values(f);
            const auto ys = data.sorted_targets(f);
            for (std::size_t i = 0; i < ids.size(); ++i)
                if (const auto w = weight[ids[i]]; w > 0) list.push_back({xs[i], ys[i], w, ids[i]});
        }
        auto& by_id = lists_[k];
        by_id.clear();
        for (std::uint32_t r = 0; r < data.rows(); ++r)
            if (weight[r] > 0) by_id.push_back({0.0, y[r], weight[r], r});
        scratch_.resize(by_id.size());
    }

    RegressionTree build() {
        if (lists_.back().empty()) throw Error("fit_tree: no rows");
        grow(0, lists_.back().size(), 0);
        return std::move(tree_);
    }

private:
    int grow(std::size_t begin, std::size_t end, int depth) {
        const auto& ids = lists_.back();

        double w_total = 0.0, sum = 0.0;
        double lo = ids[begin].y, hi = lo;
        for (std::size_t i = begin; i < end; ++i) {
            const Entry& e = ids[i];
            w_total += e.w;
            sum += e.w * e.y;
            lo = std::min(lo, e.y);
            hi = std::max(hi, e.y);
        }
        const double mean = sum / w_total;
        const int index = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back({-1, 0.0, -1, -1, mean, static_cast<std::size_t>(w_total)});

        const double min_leaf = params_.min_leaf;
        if (depth >= params_.max_depth || lo == hi || w_total < 2.0 * min_leaf) return index;

        double node_sse = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const Entry& e = ids[i];
            node_sse += e.w * (e.y - mean) * (e.y - mean);
        }
        const double tie = kSplitTieTolerance * node_sse;

        int best_feature = -1;
        double best_gain = 0.0, best_threshold = 0.0;
        for (std::size_t f = 0; f + 1 < lists_.size(); ++f) {
            const auto& list = lists_[f];
            double w_left = 0.0, centered_left = 0.0;
            for (std::size_t i = begin; i + 1 < end; ++i) {
                const Entry& e = list[i];
                w_left += e.w;
                centered_left += e.w * (e.y - mean);
                const double v_next = list[i + 1].x;
                if (v_next == e.x || w_left < min_leaf) continue;
                const double w_right = w_total - w_left;
                if (w_right < min_leaf) break;
                // Between-child sum of squares, equal to the drop in summed squared error.
                const double gain = centered_left * centered_left * w_total / (w_left * w_right);
                if (best_feature < 0 || gain > best_gain + tie) {
                    best_feature = static_cast<int>(f);
                    best_gain = gain;
                    double mid = (e.x + v_next) * 0.5;
                    if (!(mid < v_next)) mid = e.x;
                    best_threshold = mid;
                }
            }
        }
        if (best_feature < 0) return index;

        std::size_t n_left = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const Entry& e = lists_[static_cast<std::size_t>(best_feature)][i];
            const bool left = e.x <= best_threshold;
            goes_left_[e.row] = left;
            n_left += left;
        }
        for (auto& list : lists_) {
            auto out_left = scratch_.begin();
            auto out_right = scratch_.begin() + static_cast<std::ptrdiff_t>(n_left);
            for (std::size_t i = begin; i < end; ++i) {
                if (goes_left_[list[i].row])
                    *out_left++ = list[i];
                else
                    *out_right++ = list[i];
            }
            std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(end - begin),
                      list.begin() + static_cast<std::ptrdiff_t>(begin));
        }

        const int left = grow(begin, begin + n_left, depth + 1);
        const int right = grow(begin + n_left, end, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(index)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = left;
        node.right = right;
        return index;
    }

    const RfHyperparams& params_;
    std::vector<std::uint8_t>& goes_left_;
    std::vector<std::vector<Entry>>& lists_;
    std::vector<Entry>& scratch_;
    RegressionTree tree_;
};

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

RegressionTree fit_tree(const TrainingSet& data, const RfHyperparams& params,
                        std::span<const std::uint32_t> row_indices) {
    if (row_indices.empty()) throw Error("fit_tree: row_indices is empty");
    thread_local Workspace ws;
    return TreeBuilder(data, params, row_indices, ws).build();
}

RegressionTree fit_tree(const Matrix& x, std::span<const double> y, const RfHyperparams& params) {
    TrainingSet data(x, y);
    std::vector<std::uint32_t> rows(data.rows());
    std::iota(rows.begin(), rows.end(), 0u);
    return fit_tree(data, params, rows);
}

std::uint64_t tree_stream_seed(std::uint64_t seed, std::size_t index) {
    return splitmix64(splitmix64(seed) ^ (0x632be59bd9b4e019ULL * (index + 1)));
}

std::vector<std::uint32_t> tree_rows(std::size_t n, const RfHyperparams& params, std::size_t index) {
    std::vector<std::uint32_t> rows(n);
    if (!params.bootstrap) {
        std::iota(rows.begin(), rows.end(), 0u);
        return rows;
    }
    std::mt19937_64 gen(tree_stream_seed(params.seed, index));
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
    for (auto& r : rows) r = pick(gen);
    return rows;
}

RfModel fit_forest(const TrainingSet& data, const RfHyperparams& params,
                   std::vector<std::string> feature_names, unsigned threads) {
    if (data.rows() < 2) throw Error("fit_forest: need at least 2 rows, got " + std::to_string(data.rows()));
    if (params.n_trees < 1) throw Error("fit_forest: n_trees must be positive");
    if (feature_names.empty())
        for (std::size_t f = 0; f < data.features(); ++f) feature_names.push_back("x" + std::to_string(f + 1));

    RfModel model;
    model.hyperparams = params;
    model.feature_names = std::move(feature_names);
    model.trees.resize(static_cast<std::size_t>(params.n_trees));

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        try {
            for (std::size_t i; (i = next++) < model.trees.size();)
                model.trees[i] = fit_tree(data, params, tree_rows(data.rows(), params, i));
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    const unsigned workers =
        std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(model.trees.size())));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < workers; ++t) pool.emplace_back(worker);
        worker();
    }
    if (failure) std::rethrow_exception(failure);
    return model;
}

RfModel fit_forest(const Matrix& x, std::span<const double> y, const RfHyperparams& params,
                   std::vector<std::string> feature_names, unsigned threads) {
    if (x.rows() == 0) throw Error("fit_forest: empty dataset");
    return fit_forest(TrainingSet(x, y), params, std::move(feature_names), threads);
}

double predict_forest(const RfModel& m, std::span<const double> x) {
    if (x.size() != m.feature_names.size())
        throw Error("predict_forest: expected " + std::to_string(m.feature_names.size()) +
                    " features, got " + std::to_string(x.size()));
    double sum = 0.0;
    for (const auto& t : m.trees) sum += t.predict(x);
    return sum / static_cast<double>(m.trees.size());
}

std::vector<double> predict_forest(const RfModel& m, const Matrix& x) {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict_forest(m, x.row(i));
    return out;
}

namespace {

nlohmann::ordered_json node_to_json(const RegressionTree& t, int index) {
    const auto& n = t.nodes[static_cast<std::size_t>(index)];
    nlohmann::ordered_json j;
    j["v"] = n.value;
    j["n"] = n.count;
    if (!n.is_leaf()) {
        j["f"] = n.feature;
        j["t"] = n.threshold;
        j["l"] = node_to_json(t, n.left);
        j["r"] = node_to_json(t, n.right);
    }
    return j;
}

int node_from_json(const nlohmann::ordered_json& j, RegressionTree& t) {
    const int index = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    t.nodes.back().value = j.at("v").get<double>();
    t.nodes.back().count = j.at("n").get<std::size_t>();
    if (!j.contains("f")) return index;
    const int feature = j.at("f").get<int>();
    const double threshold = j.at("t").get<double>();
    const int left = node_from_json(j.at("l"), t);
    const int right = node_from_json(j.at("r"), t);
    auto& n = t.nodes[static_cast<std::size_t>(index)];
    n.feature = feature;
    n.threshold = threshold;
    n.left = left;
    n.right = right;
    return index;
}

}  // namespace

nlohmann::ordered_json tree_to_json(const RegressionTree& t) { return node_to_json(t, 0); }

RegressionTree tree_from_json(const nlohmann::ordered_json& j) {
    RegressionTree t;
    node_from_json(j, t);
    return t;
}

nlohmann::ordered_json rf_to_json(const RfModel& m) {
    nlohmann::ordered_json j;
    j["type"] = "rf";
    j["features"] = m.feature_names;
    j["hyperparams"] = {{"n_trees", m.hyperparams.n_trees},
                        {"min_leaf", m.hyperparams.min_leaf},
                        {"max_depth", m.hyperparams.max_depth},
                        {"seed", m.hyperparams.seed},
                        {"bootstrap", m.hyperparams.bootstrap}};
    auto& trees = j["trees"] = nlohmann::ordered_json::array();
    for (const auto& t : m.trees) trees.push_back(tree_to_json(t));
    return j;
}

RfModel rf_from_json(const nlohmann::ordered_json& j) {
    if (j.value("type", "") != "rf") throw Error("not an rf model");
    RfModel m;
    m.feature_names = j.at("features").get<std::vector<std::string>>();
    const auto& h = j.at("hyperparams");
    m.hyperparams.n_trees = h.at("n_trees").get<int>();
    m.hyperparams.min_leaf = h.at("min_leaf").get<int>();
    m.hyperparams.max_depth = h.at("max_depth").get<int>();
    m.hyperparams.seed = h.at("seed").get<std::uint64_t>();
    m.hyperparams.bootstrap = h.at("bootstrap").get<bool>();
    for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
    if (m.trees.size() != static_cast<std::size_t>(m.hyperparams.n_trees))
        throw Error("rf model: tree count does not match n_trees");
    return m;
}

SearchResult search_grid(const std::function<double(int, int)>& evaluate, const SearchOptions& opts) {
    if (opts.min_depth > opts.max_depth || opts.min_leaf > opts.max_leaf)
        throw Error("search_grid: empty grid");
    if (opts.patience < 1) throw Error("search_grid: patience must be positive");

    SearchResult result;
    result.val_rmse = std::numeric_limits<double>::infinity();
    auto consider = [&](int depth, int leaf, double score) {
        result.trace.push_back({depth, leaf, score});
        const bool better =
            result.trace.size() == 1 || score < result.val_rmse ||
            (score == result.val_rmse &&
             (depth < result.max_depth || (depth == result.max_depth && leaf > result.min_leaf)));
        if (better) {
            result.max_depth = depth;
            result.min_leaf = leaf;
            result.val_rmse = score;
        }
    };

    double overall_best = std::numeric_limits<double>::infinity();
    int stale_rows = 0;
    for (int depth = opts.min_depth; depth <= opts.max_depth; ++depth) {
        double row_best = std::numeric_limits<double>::infinity();
        int stale_steps = 0;
        for (int leaf = opts.min_leaf; leaf <= opts.max_leaf; ++leaf) {
            const double score = evaluate(depth, leaf);
            consider(depth, leaf, score);
            if (score < row_best) {
                row_best = score;
                stale_steps = 0;
            } else if (!opts.exhaustive && ++stale_steps >= opts.patience) {
                if (leaf < opts.max_leaf) result.stopped_early = true;
                break;
            }
        }
        if (row_best < overall_best) {
            overall_best = row_best;
            stale_rows = 0;
        } else if (!opts.exhaustive && ++stale_rows >= opts.patience) {
            if (depth < opts.max_depth) result.stopped_early = true;
            break;
        }
    }
    return result;
}

TuneResult tune_hyperparams(const Matrix& x, std::span<const double> y, const TuneOptions& opts,
                            int final_trees) {
    const std::size_t n = x.rows();
    if (n < kMinTuneRows)
        throw Error("tune_hyperparams: need at least " + std::to_string(kMinTuneRows) +
                    " rows, got " + std::to_string(n));
    if (y.size() != n) throw Error("tune_hyperparams: row/target count mismatch");
    const auto n_inner = static_cast<std::size_t>(std::floor(static_cast<double>(n) * opts.inner_train_fraction));
    if (n_inner < 2 || n_inner >= n) throw Error("tune_hyperparams: inner split leaves an empty side");

    Matrix inner_x, val_x;
    for (std::size_t i = 0; i < n; ++i) (i < n_inner ? inner_x : val_x).append_row(x.row(i));
    const TrainingSet inner(inner_x, y.first(n_inner));
    const auto val_y = y.subspan(n_inner);

    // Split choices never depend on max_depth, and every grid point shares the seed, so the
    // forest for (d, leaf) is the deepest forest for `leaf` cut off at depth d. One deep forest
    // per min_leaf therefore scores a whole column of the grid.
    const int lo_depth = opts.search.min_depth, hi_depth = opts.search.max_depth;
    std::map<int, std::vector<double>> rmse_by_depth;
    auto evaluate = [&](int depth, int leaf) {
        auto it = rmse_by_depth.find(leaf);
        if (it == rmse_by_depth.end()) {
            RfHyperparams p;
            p.n_trees = opts.tune_trees;
            p.max_depth = hi_depth;
            p.min_leaf = leaf;
            p.seed = opts.seed;
            const RfModel m = fit_forest(inner, p, {}, opts.threads);
            const auto levels = static_cast<std::size_t>(hi_depth - lo_depth + 1);
            std::vector<std::vector<double>> pred(levels, std::vector<double>(val_x.rows()));
            for (std::size_t i = 0; i < val_x.rows(); ++i) {
                const auto row = val_x.row(i);
                std::vector<double> sum(levels, 0.0);
                for (const auto& t : m.trees) {
                    const TreeNode* node = &t.nodes.front();
                    int d = 0;
                    for (std::size_t level = 0; level < levels; ++level) {
                        while (d < lo_depth + static_cast<int>(level) && !node->is_leaf()) {
                            node = &t.nodes[static_cast<std::size_t>(
                                row[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left
                                                                                                 : node->right)];
                            ++d;
                        }
                        sum[level] += node->value;
                    }
                }
                for (std::size_t level = 0; level < levels; ++level)
                    pred[level][i] = sum[level] / static_cast<double>(m.trees.size());
            }
            std::vector<double> scores(levels);
            for (std::size_t level = 0; level < levels; ++level) scores[level] = rmse(val_y, pred[level]);
            it = rmse_by_depth.emplace(leaf, std::move(scores)).first;
        }
        return it->second[static_cast<std::size_t>(depth - lo_depth)];
    };

    TuneResult out;
    out.search = search_grid(evaluate, opts.search);
    out.best.n_trees = final_trees;
    out.best.max_depth = out.search.max_depth;
    out.best.min_leaf = out.search.min_leaf;
    out.best.seed = opts.seed;
    return out;
}

}  // namespace loopflow
