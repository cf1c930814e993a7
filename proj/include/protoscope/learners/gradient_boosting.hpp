#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "protoscope/learners/decision_tree.hpp"
#include "protoscope/learners/logistic.hpp"

namespace protoscope::learners {

/// Stagewise binomial-deviance boosting on shallow CART regression trees.
/// Stored leaf values already include the shrinkage factor; a stage that
/// would raise the training deviance is halved until it does not, which keeps
/// the staged deviance trace nonincreasing.
struct GradientBoostingModel {
    double base_margin = 0.0;
    std::vector<Tree> trees;
    std::vector<double> train_deviance; // per stage, after applying the stage

    double margin(const std::vector<double>& x) const {
        double m = base_margin;
        for (const auto& tree : trees) m += tree.leaf_value(x);
        return m;
    }
    double probability(const std::vector<double>& x) const { return sigmoid(margin(x)); }
};

namespace gb_detail {

inline double deviance(const std::vector<double>& margins, const std::vector<int>& y) {
    double total = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        const double s = y[i] == 1 ? 1.0 : -1.0;
        const double sz = s * margins[i];
        total += sz > 0 ? std::log1p(std::exp(-sz)) : -sz + std::log1p(std::exp(sz));
    }
    return total / static_cast<double>(margins.size());
}

} // namespace gb_detail

inline GradientBoostingModel fit_gradient_boosting(const std::vector<std::vector<double>>& X,
                                                   const std::vector<int>& y, int n_stages,
                                                   double shrinkage, int max_depth,
                                                   int min_leaf = 1) {
    const std::size_t n = X.size();
    GradientBoostingModel model;
    double pos = 0.0;
    for (const int v : y) pos += v;
    const double prior = std::clamp(pos / static_cast<double>(n), 1e-12, 1.0 - 1e-12);
    model.base_margin = std::log(prior / (1.0 - prior));

    std::vector<double> margins(n, model.base_margin);
    std::vector<double> grad(n), hess(n), stage_step(n);
    double previous = gb_detail::deviance(margins, y);

    tree_detail::TreeFitConfig cfg;
    cfg.max_depth = max_depth;
    cfg.min_leaf = min_leaf;

    for (int stage = 0; stage < n_stages; ++stage) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margins[i]);
            grad[i] = (y[i] == 1 ? 1.0 : 0.0) - p;
            hess[i] = std::max(p * (1.0 - p), 1e-12);
        }
        Tree tree = fit_regression_tree(X, grad, hess, cfg);
        for (auto& node : tree.nodes) node.value *= shrinkage;

        for (std::size_t i = 0; i < n; ++i) stage_step[i] = tree.leaf_value(X[i]);
        double scale = 1.0;
        double candidate = previous;
        bool accepted = false;
        std::vector<double> trial(n);
        for (int halving = 0; halving < 40; ++halving) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = margins[i] + scale * stage_step[i];
            candidate = gb_detail::deviance(trial, y);
            if (candidate <= previous) {
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if (!accepted) { // stage cannot improve; keep it as a no-op
            scale = 0.0;
            candidate = previous;
        }
        if (scale != 1.0)
            for (auto& node : tree.nodes) node.value *= scale;
        for (std::size_t i = 0; i < n; ++i) margins[i] += scale * stage_step[i];
        previous = candidate;
        model.train_deviance.push_back(previous);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

} // namespace protoscope::learners
