#pragma once

// CART-style regression tree used as the task discriminator.
//
// Splits minimize the weighted child variance G(Q, theta); candidate
// thresholds sit at midpoints between consecutive distinct sorted feature
// values. The fitted tree is immutable: routing, DFS path extraction and
// leaf boxes are all read-only.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dnt/core.hpp"

namespace dnt {

/// (x, y) rows stored row-major.
struct Dataset {
    std::size_t cols = 0;
    std::vector<double> x;
    std::vector<double> y;

    Dataset() = default;
    explicit Dataset(std::size_t feature_count) : cols(feature_count) {}

    std::size_t rows() const { return y.size(); }

    std::span<const double> row(std::size_t i) const { return {x.data() + i * cols, cols}; }

    void add(std::span<const double> features, double target) {
        if (features.size() != cols) throw std::invalid_argument("row dimension mismatch");
        x.insert(x.end(), features.begin(), features.end());
        y.push_back(target);
    }
};

struct SplitCandidate {
    int feature = 0;
    double threshold = 0.0;

    bool operator==(const SplitCandidate&) const = default;
};

/// One root-to-leaf decision: side is the branch taken at (feature, threshold).
struct PathStep {
    int feature = 0;
    double threshold = 0.0;
    bool less_equal = true;  // true: x[feature] <= threshold (left), false: > (right)

    bool operator==(const PathStep&) const = default;
};

using PathConstraint = std::vector<PathStep>;

/// Population variance of the targets (the MSE impurity H).
inline double impurity(std::span<const double> targets) {
    if (targets.empty()) throw std::invalid_argument("impurity of empty target set");
    const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / targets.size();
    double sse = 0.0;
    for (double t : targets) sse += (t - mean) * (t - mean);
    return sse / targets.size();
}

/// Weighted child impurity G = (n_l/N)H(left) + (n_r/N)H(right).
inline double split_cost(std::span<const double> left, std::span<const double> right) {
    if (left.empty() || right.empty()) throw std::invalid_argument("split_cost with an empty side");
    const double n = static_cast<double>(left.size() + right.size());
    return (left.size() / n) * impurity(left) + (right.size() / n) * impurity(right);
}

namespace detail {

// Costs computed along different scan orders agree only up to rounding, so
// "strictly better" must beat the incumbent by a sliver before we move off
// the lowest-feature/lowest-threshold candidate. Mathematically tied
// candidates then resolve identically in this scan and in brute force.
inline bool cost_improves(double cost, double best) {
    return cost < best - 1e-12 * std::max(1.0, std::abs(best));
}

}  // namespace detail

/// Exhaustive scan for the cost-minimizing (feature, threshold) pair.
/// Ties resolve to the lowest feature index, then the smallest threshold.
/// Returns nullopt when nothing can split the data (constant features or
/// pure targets).
inline std::optional<SplitCandidate> best_split(const Dataset& data) {
    const std::size_t n = data.rows();
    if (n < 2) return std::nullopt;

    std::optional<SplitCandidate> best;
    double best_cost = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(n);
    std::vector<double> prefix_y(n + 1), prefix_y2(n + 1);

    for (int j = 0; j < static_cast<int>(data.cols); ++j) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return data.x[a * data.cols + j] < data.x[b * data.cols + j];
        });

        prefix_y[0] = prefix_y2[0] = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = data.y[order[i]];
            prefix_y[i + 1] = prefix_y[i] + t;
            prefix_y2[i + 1] = prefix_y2[i] + t * t;
        }

        const double total_y = prefix_y[n];
        const double total_y2 = prefix_y2[n];

        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double v = data.x[order[i] * data.cols + j];
            const double next = data.x[order[i + 1] * data.cols + j];
            if (!(v < next)) continue;  // candidates only between distinct values

            const double nl = static_cast<double>(i + 1);
            const double nr = static_cast<double>(n - i - 1);
            const double sse_l = std::max(0.0, prefix_y2[i + 1] - prefix_y[i + 1] * prefix_y[i + 1] / nl);
            const double sse_r = std::max(0.0, (total_y2 - prefix_y2[i + 1]) -
                                                   (total_y - prefix_y[i + 1]) * (total_y - prefix_y[i + 1]) / nr);
            const double cost = (sse_l + sse_r) / static_cast<double>(n);
            if (detail::cost_improves(cost, best_cost)) {
                best_cost = cost;
                best = SplitCandidate{j, 0.5 * (v + next)};
            }
        }
    }
    return best;
}

struct TreeNode {
    // Internal node fields; left < 0 marks a leaf.
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    // Leaf fields.
    int leaf_id = -1;
    double mean = 0.0;
    std::int64_t count = 0;

    bool is_leaf() const { return left < 0; }
};

class RegressionTree {
  public:
    RegressionTree() = default;

    /// Recursive CART fit. A node becomes a leaf at max_depth, at or below
    /// min_leaf rows, on pure targets, or when no candidate splits the data.
    static RegressionTree fit(const Dataset& data, int max_depth, int min_leaf = 5) {
        if (data.rows() == 0) throw std::invalid_argument("cannot fit a tree on empty data");
        if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");

        RegressionTree tree;
        tree.feature_count_ = static_cast<int>(data.cols);
        tree.max_depth_ = max_depth;

        std::vector<std::size_t> all(data.rows());
        std::iota(all.begin(), all.end(), std::size_t{0});
        tree.build(data, all, 0, max_depth, min_leaf);
        return tree;
    }

    int feature_count() const { return feature_count_; }
    int max_depth() const { return max_depth_; }
    int leaf_count() const { return leaf_count_; }
    const std::vector<TreeNode>& nodes() const { return nodes_; }

    int depth() const { return node_depth(0); }

    /// Routes x to its leaf (x[j] <= t goes left).
    int leaf_of(std::span<const double> x) const {
        return nodes_[node_of(x)].leaf_id;
    }

    /// Node index x routes to (always a leaf node index).
    int node_of(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != feature_count_) {
            throw std::invalid_argument("input has dimension " + std::to_string(x.size()) +
                                        ", tree expects " + std::to_string(feature_count_));
        }
        int idx = 0;
        while (!nodes_[idx].is_leaf()) {
            idx = (x[nodes_[idx].feature] <= nodes_[idx].threshold) ? nodes_[idx].left : nodes_[idx].right;
        }
        return idx;
    }

    /// Leaf mean of the routed leaf.
    double predict(std::span<const double> x) const { return nodes_[node_of(x)].mean; }

    /// DFS extraction of every root-to-leaf decision path.
    std::map<int, PathConstraint> paths() const {
        std::map<int, PathConstraint> out;
        PathConstraint current;
        collect_paths(0, current, out);
        return out;
    }

    /// Root-to-node decision path for an arbitrary node index.
    PathConstraint path_to_node(int target) const {
        PathConstraint path;
        if (!find_node_path(0, target, path)) {
            throw std::out_of_range("node index " + std::to_string(target) + " not in tree");
        }
        return path;
    }

    /// Axis-aligned box reaching the path's destination: "<= t" tightens the
    /// upper bound, "> t" the lower bound. Boxes follow the half-open
    /// (lo, hi] convention on dimensions tightened from below.
    static std::vector<Interval> leaf_box(const PathConstraint& path,
                                          const std::vector<Interval>& global_ranges) {
        std::vector<Interval> box = global_ranges;
        std::vector<bool> lower_open(box.size(), false);
        for (const auto& step : path) {
            auto& iv = box.at(step.feature);
            if (step.less_equal) {
                iv.hi = std::min(iv.hi, step.threshold);
            } else {
                if (step.threshold >= iv.lo) {
                    iv.lo = step.threshold;
                    lower_open[step.feature] = true;
                }
            }
            if (iv.lo > iv.hi || (iv.lo == iv.hi && lower_open[step.feature])) {
                throw std::runtime_error("empty box: path contradicts global range on feature " +
                                         std::to_string(step.feature));
            }
        }
        return box;
    }

    // -- serialization ------------------------------------------------------

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["feature_count"] = feature_count_;
        j["max_depth"] = max_depth_;
        j["leaf_count"] = leaf_count_;
        j["root"] = node_to_json(0);
        return j;
    }

    static RegressionTree from_json(const nlohmann::json& j) {
        RegressionTree tree;
        tree.feature_count_ = j.at("feature_count").get<int>();
        tree.max_depth_ = j.at("max_depth").get<int>();
        tree.leaf_count_ = j.at("leaf_count").get<int>();
        tree.node_from_json(j.at("root"));
        return tree;
    }

  private:
    int build(const Dataset& data, const std::vector<std::size_t>& rows, int depth,
              int max_depth, int min_leaf) {
        const int idx = static_cast<int>(nodes_.size());
        nodes_.emplace_back();

        double mean = 0.0;
        for (std::size_t r : rows) mean += data.y[r];
        mean /= static_cast<double>(rows.size());

        bool pure = true;
        for (std::size_t r : rows) {
            if (data.y[r] != data.y[rows[0]]) {
                pure = false;
                break;
            }
        }

        std::optional<SplitCandidate> split;
        if (depth < max_depth && static_cast<int>(rows.size()) > min_leaf && !pure) {
            Dataset sub(data.cols);
            for (std::size_t r : rows) sub.add(data.row(r), data.y[r]);
            split = best_split(sub);
        }

        if (!split) {
            nodes_[idx].leaf_id = leaf_count_++;
            nodes_[idx].mean = mean;
            nodes_[idx].count = static_cast<std::int64_t>(rows.size());
            return idx;
        }

        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : rows) {
            if (data.x[r * data.cols + split->feature] <= split->threshold) {
                left_rows.push_back(r);
            } else {
                right_rows.push_back(r);
            }
        }

        nodes_[idx].feature = split->feature;
        nodes_[idx].threshold = split->threshold;
        const int left = build(data, left_rows, depth + 1, max_depth, min_leaf);
        const int right = build(data, right_rows, depth + 1, max_depth, min_leaf);
        nodes_[idx].left = left;
        nodes_[idx].right = right;
        return idx;
    }

    int node_depth(int idx) const {
        const auto& nd = nodes_[idx];
        if (nd.is_leaf()) return 0;
        return 1 + std::max(node_depth(nd.left), node_depth(nd.right));
    }

    void collect_paths(int idx, PathConstraint& current, std::map<int, PathConstraint>& out) const {
        const auto& nd = nodes_[idx];
        if (nd.is_leaf()) {
            out[nd.leaf_id] = current;
            return;
        }
        current.push_back({nd.feature, nd.threshold, true});
        collect_paths(nd.left, current, out);
        current.back().less_equal = false;
        collect_paths(nd.right, current, out);
        current.pop_back();
    }

    bool find_node_path(int idx, int target, PathConstraint& path) const {
        if (idx == target) return true;
        const auto& nd = nodes_[idx];
        if (nd.is_leaf()) return false;
        path.push_back({nd.feature, nd.threshold, true});
        if (find_node_path(nd.left, target, path)) return true;
        path.back().less_equal = false;
        if (find_node_path(nd.right, target, path)) return true;
        path.pop_back();
        return false;
    }

    nlohmann::json node_to_json(int idx) const {
        const auto& nd = nodes_[idx];
        if (nd.is_leaf()) {
            return {{"leaf", {{"id", nd.leaf_id}, {"mean", nd.mean}, {"count", nd.count}}}};
        }
        return {{"split", {{"feature", nd.feature}, {"threshold", nd.threshold}}},
                {"left", node_to_json(nd.left)},
                {"right", node_to_json(nd.right)}};
    }

    int node_from_json(const nlohmann::json& j) {
        const int idx = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        if (j.contains("leaf")) {
            nodes_[idx].leaf_id = j.at("leaf").at("id").get<int>();
            nodes_[idx].mean = j.at("leaf").at("mean").get<double>();
            nodes_[idx].count = j.at("leaf").at("count").get<std::int64_t>();
            return idx;
        }
        nodes_[idx].feature = j.at("split").at("feature").get<int>();
        nodes_[idx].threshold = j.at("split").at("threshold").get<double>();
        const int left = node_from_json(j.at("left"));
        const int right = node_from_json(j.at("right"));
        nodes_[idx].left = left;
        nodes_[idx].right = right;
        return idx;
    }

    std::vector<TreeNode> nodes_;
    int feature_count_ = 0;
    int max_depth_ = 0;
    int leaf_count_ = 0;
};

}  // namespace dnt
