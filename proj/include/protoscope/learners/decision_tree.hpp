#pragma once

// CART trees shared by the DT, RF and GB learners. Splits use midpoint
// thresholds between consecutive distinct values; tie-breaks are resolved by
// (feature order, threshold) so training is deterministic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "protoscope/rng.hpp"

namespace protoscope::learners {

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0; // leaf: class-1 fraction (classification) or step (regression)
    int n = 0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    double leaf_value(const std::vector<double>& x) const {
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const auto& node = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(node.feature)] < node.threshold ? node.left
                                                                           : node.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }

    /// Leaf reached by routing feature j from `a` when selected, else from `b`.
    double leaf_value_mixed(const std::vector<double>& a, const std::vector<double>& b,
                            const std::vector<bool>& from_a) const {
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const auto& node = nodes[static_cast<std::size_t>(i)];
            const auto f = static_cast<std::size_t>(node.feature);
            const double v = from_a[f] ? a[f] : b[f];
            i = v < node.threshold ? node.left : node.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }
};

namespace tree_detail {

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0; // impurity improvement; larger is better
};

struct TreeFitConfig {
    int max_depth = 0;   // 0 = unlimited
    int min_leaf = 1;
    int features_per_split = 0; // 0 = all features
};

inline double gini(double pos, double total) {
    if (total <= 0.0) return 0.0;
    const double p = pos / total;
    return 2.0 * p * (1.0 - p);
}

template <class Accumulate>
SplitChoice best_split(const std::vector<std::vector<double>>& X,
                       const std::vector<std::size_t>& idx,
                       const std::vector<int>& candidate_features, int min_leaf,
                       Accumulate&& impurity_gain) {
    SplitChoice best;
    std::vector<std::size_t> order(idx);
    for (const int f : candidate_features) {
        const auto fi = static_cast<std::size_t>(f);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (X[a][fi] != X[b][fi]) return X[a][fi] < X[b][fi];
            return a < b;
        });
        // scan boundaries between distinct consecutive values, ascending
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
            const double lo = X[order[k]][fi];
            const double hi = X[order[k + 1]][fi];
            if (lo == hi) continue;
            const std::size_t n_left = k + 1;
            const std::size_t n_right = order.size() - n_left;
            if (n_left < static_cast<std::size_t>(min_leaf) ||
                n_right < static_cast<std::size_t>(min_leaf))
                continue;
            const double gain = impurity_gain(order, n_left);
            // zero-gain splits are allowed (a depth-2 tree must express XOR);
            // ties keep the earliest (feature, threshold) candidate
            if (!best.found || gain > best.score + 1e-12) {
                best.found = true;
                best.feature = f;
                best.threshold = 0.5 * (lo + hi);
                best.score = gain;
            }
        }
    }
    return best;
}

} // namespace tree_detail

/// Gini-impurity CART classifier. Leaves store the class-1 fraction.
/// When cfg.features_per_split > 0, that many distinct features are drawn per
/// split from `stream` (random forest mode).
inline Tree fit_classification_tree(const std::vector<std::vector<double>>& X,
                                    const std::vector<int>& y,
                                    const std::vector<std::size_t>& sample,
                                    const tree_detail::TreeFitConfig& cfg,
                                    rng::Stream* stream = nullptr) {
    Tree tree;
    const std::size_t d = X.empty() ? 0 : X[0].size();

    struct Work {
        std::vector<std::size_t> idx;
        int depth;
        int node;
    };
    std::vector<Work> stack;
    tree.nodes.emplace_back();
    stack.push_back({sample, 0, 0});

    while (!stack.empty()) {
        Work work = std::move(stack.back());
        stack.pop_back();
        auto& node = tree.nodes[static_cast<std::size_t>(work.node)];
        node.n = static_cast<int>(work.idx.size());

        double pos = 0.0;
        for (const auto i : work.idx) pos += y[i];
        const double total = static_cast<double>(work.idx.size());
        node.value = total > 0.0 ? pos / total : 0.0;

        const bool depth_capped = cfg.max_depth > 0 && work.depth >= cfg.max_depth;
        if (depth_capped || pos == 0.0 || pos == total ||
            work.idx.size() < 2 * static_cast<std::size_t>(cfg.min_leaf) ||
            work.idx.size() < 2)
            continue; // leaf

        std::vector<int> candidates;
        if (cfg.features_per_split > 0 && stream != nullptr &&
            static_cast<std::size_t>(cfg.features_per_split) < d) {
            std::vector<int> all(d);
            std::iota(all.begin(), all.end(), 0);
            for (int k = 0; k < cfg.features_per_split; ++k) {
                const auto j = static_cast<std::size_t>(
                    stream->uniform_int(k, static_cast<std::int64_t>(d) - 1));
                std::swap(all[static_cast<std::size_t>(k)], all[j]);
            }
            candidates.assign(all.begin(), all.begin() + cfg.features_per_split);
            std::sort(candidates.begin(), candidates.end()); // feature-order tie-break
        } else {
            candidates.resize(d);
            std::iota(candidates.begin(), candidates.end(), 0);
        }

        const double parent_gini = tree_detail::gini(pos, total);
        const auto split = tree_detail::best_split(
            X, work.idx, candidates, cfg.min_leaf,
            [&](const std::vector<std::size_t>& order, std::size_t n_left) {
                double pos_left = 0.0;
                for (std::size_t k = 0; k < n_left; ++k) pos_left += y[order[k]];
                const double nl = static_cast<double>(n_left);
                const double nr = total - nl;
                const double child = (nl * tree_detail::gini(pos_left, nl) +
                                      nr * tree_detail::gini(pos - pos_left, nr)) /
                                     total;
                return parent_gini - child;
            });
        if (!split.found) continue;

        std::vector<std::size_t> left_idx, right_idx;
        for (const auto i : work.idx)
            (X[i][static_cast<std::size_t>(split.feature)] < split.threshold ? left_idx
                                                                             : right_idx)
                .push_back(i);
        const int left = static_cast<int>(tree.nodes.size());
        const int right = left + 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back(); // may reallocate; write via fresh reference
        auto& parent = tree.nodes[static_cast<std::size_t>(work.node)];
        parent.feature = split.feature;
        parent.threshold = split.threshold;
        parent.left = left;
        parent.right = right;
        stack.push_back({std::move(right_idx), work.depth + 1, right});
        stack.push_back({std::move(left_idx), work.depth + 1, left});
    }
    return tree;
}

/// Variance-reduction CART regression tree with Newton leaves Σg/Σh, used as
/// the base learner of gradient boosting.
inline Tree fit_regression_tree(const std::vector<std::vector<double>>& X,
                                const std::vector<double>& grad,
                                const std::vector<double>& hess,
                                const tree_detail::TreeFitConfig& cfg) {
    Tree tree;
    const std::size_t d = X.empty() ? 0 : X[0].size();

    struct Work {
        std::vector<std::size_t> idx;
        int depth;
        int node;
    };
    std::vector<Work> stack;
    tree.nodes.emplace_back();
    {
        std::vector<std::size_t> all(X.size());
        std::iota(all.begin(), all.end(), 0);
        stack.push_back({std::move(all), 0, 0});
    }

    const auto newton_value = [&](const std::vector<std::size_t>& idx) {
        double g = 0.0, h = 0.0;
        for (const auto i : idx) {
            g += grad[i];
            h += hess[i];
        }
        if (h < 1e-12) return 0.0;
        return std::clamp(g / h, -10.0, 10.0);
    };

    while (!stack.empty()) {
        Work work = std::move(stack.back());
        stack.pop_back();
        auto& node = tree.nodes[static_cast<std::size_t>(work.node)];
        node.n = static_cast<int>(work.idx.size());
        node.value = newton_value(work.idx);

        const bool depth_capped = cfg.max_depth > 0 && work.depth >= cfg.max_depth;
        if (depth_capped || work.idx.size() < 2 * static_cast<std::size_t>(cfg.min_leaf) ||
            work.idx.size() < 2)
            continue;

        double sum = 0.0;
        for (const auto i : work.idx) sum += grad[i];
        const double total = static_cast<double>(work.idx.size());
        double sq = 0.0;
        for (const auto i : work.idx) sq += grad[i] * grad[i];
        const double parent_sse = sq - sum * sum / total;
        if (parent_sse <= 1e-12) continue; // residuals constant

        std::vector<int> candidates(d);
        std::iota(candidates.begin(), candidates.end(), 0);
        const auto split = tree_detail::best_split(
            X, work.idx, candidates, cfg.min_leaf,
            [&](const std::vector<std::size_t>& order, std::size_t n_left) {
                double sum_left = 0.0;
                for (std::size_t k = 0; k < n_left; ++k) sum_left += grad[order[k]];
                const double nl = static_cast<double>(n_left);
                const double nr = total - nl;
                // SSE reduction = between-group variance term
                const double mean_l = sum_left / nl;
                const double mean_r = (sum - sum_left) / nr;
                const double mean = sum / total;
                return nl * (mean_l - mean) * (mean_l - mean) +
                       nr * (mean_r - mean) * (mean_r - mean);
            });
        if (!split.found) continue;

        std::vector<std::size_t> left_idx, right_idx;
        for (const auto i : work.idx)
            (X[i][static_cast<std::size_t>(split.feature)] < split.threshold ? left_idx
                                                                             : right_idx)
                .push_back(i);
        const int left = static_cast<int>(tree.nodes.size());
        const int right = left + 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back(); // may reallocate; write via fresh reference
        auto& parent = tree.nodes[static_cast<std::size_t>(work.node)];
        parent.feature = split.feature;
        parent.threshold = split.threshold;
        parent.left = left;
        parent.right = right;
        stack.push_back({std::move(right_idx), work.depth + 1, right});
        stack.push_back({std::move(left_idx), work.depth + 1, left});
    }
    return tree;
}

} // namespace protoscope::learners
