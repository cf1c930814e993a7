#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "protoscope/learners/decision_tree.hpp"
#include "protoscope/parallel.hpp"
#include "protoscope/rng.hpp"

namespace protoscope::learners {

/// Bagged CART ensemble with ceil(sqrt(d)) feature subsampling per split.
/// The predicted probability is the fraction of trees voting class 1.
struct RandomForestModel {
    std::vector<Tree> trees;

    double probability(const std::vector<double>& x) const {
        double votes = 0.0;
        for (const auto& tree : trees)
            if (tree.leaf_value(x) >= 0.5) votes += 1.0;
        return trees.empty() ? 0.0 : votes / static_cast<double>(trees.size());
    }
};

inline RandomForestModel fit_random_forest(const std::vector<std::vector<double>>& X,
                                           const std::vector<int>& y, int n_trees,
                                           int max_depth, int min_leaf, std::uint64_t seed) {
    const std::size_t n = X.size();
    const std::size_t d = n == 0 ? 0 : X[0].size();
    RandomForestModel model;
    model.trees.resize(static_cast<std::size_t>(n_trees));

    tree_detail::TreeFitConfig cfg;
    cfg.max_depth = max_depth;
    cfg.min_leaf = min_leaf;
    cfg.features_per_split = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));

    // each tree owns its stream, so parallel and serial builds agree
    parallel_for(static_cast<std::size_t>(n_trees), [&](std::size_t t) {
        rng::Stream stream(seed, 0xF0000 + t);
        std::vector<std::size_t> bootstrap(n);
        for (auto& i : bootstrap)
            i = static_cast<std::size_t>(stream.uniform_int(0, static_cast<std::int64_t>(n) - 1));
        model.trees[t] = fit_classification_tree(X, y, bootstrap, cfg, &stream);
    });
    return model;
}

} // namespace protoscope::learners
