#pragma once

// Nested cross-validation: an inner stratified k-fold grid search optimizes
// F1, the outer folds estimate generalization of the tuned learner. Every
// standardizer and every hyperparameter decision is computed strictly inside
// its training partition.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "protoscope/errors.hpp"
#include "protoscope/learners/model.hpp"
#include "protoscope/metrics.hpp"
#include "protoscope/parallel.hpp"
#include "protoscope/rng.hpp"
#include "protoscope/stats.hpp"

namespace protoscope::eval {

using learners::FittedModel;
using learners::HyperGrid;
using learners::HyperParams;
using learners::ModelKind;
using metrics::MetricSet;

/// Stratified fold assignment: seeded shuffle within each class, then
/// round-robin. fold_of[i] in [0, k).
inline std::vector<int> stratified_fold_assignment(const std::vector<int>& y, int k,
                                                   std::uint64_t seed,
                                                   std::uint64_t stream_id) {
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i] == 1 ? 1 : 0].push_back(i);
    for (const auto& cls : by_class)
        if (cls.size() < static_cast<std::size_t>(k))
            throw TooFewPerClass("each class needs at least k members");
    std::vector<int> fold_of(y.size(), 0);
    for (int cls = 0; cls < 2; ++cls) {
        auto idx = by_class[cls];
        rng::Stream stream(seed, stream_id + static_cast<std::uint64_t>(cls));
        stream.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i)
            fold_of[idx[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    }
    return fold_of;
}

struct GridSearchResult {
    HyperParams best;
    std::size_t best_index = 0;
    std::vector<double> mean_f1; // per grid cell, canonical order
};

/// Exhaustive grid search on mean inner-fold F1. Ties keep the earlier cell.
inline GridSearchResult grid_search_inner(ModelKind kind, const HyperGrid& grid,
                                          const std::vector<std::vector<double>>& X,
                                          const std::vector<int>& y, int k,
                                          std::uint64_t seed) {
    if (grid.empty()) throw BadConfig("empty hyperparameter grid");
    const auto fold_of = stratified_fold_assignment(y, k, seed, 0x1BBE22);

    struct Task {
        std::size_t cell;
        int fold;
    };
    std::vector<Task> tasks;
    for (std::size_t c = 0; c < grid.size(); ++c)
        for (int f = 0; f < k; ++f) tasks.push_back({c, f});
    std::vector<double> fold_f1(tasks.size(), 0.0);

    parallel_for(tasks.size(), [&](std::size_t t) {
        const auto [cell, fold] = tasks[t];
        std::vector<std::vector<double>> train_x, val_x;
        std::vector<int> train_y, val_y;
        for (std::size_t i = 0; i < X.size(); ++i) {
            if (fold_of[i] == fold) {
                val_x.push_back(X[i]);
                val_y.push_back(y[i]);
            } else {
                train_x.push_back(X[i]);
                train_y.push_back(y[i]);
            }
        }
        // standardization (for LR/MLP) happens inside fit, on train_x only
        const auto model = learners::fit(kind, grid[cell], train_x, train_y,
                                         rng::derive(seed, 0xF17 + t));
        const auto pred = learners::predict(model, val_x);
        fold_f1[t] = metrics::confusion_metrics(val_y, pred).f1;
    });

    GridSearchResult result;
    result.mean_f1.assign(grid.size(), 0.0);
    for (std::size_t t = 0; t < tasks.size(); ++t)
        result.mean_f1[tasks[t].cell] += fold_f1[t] / static_cast<double>(k);
    result.best_index = 0;
    for (std::size_t c = 1; c < grid.size(); ++c)
        if (result.mean_f1[c] > result.mean_f1[result.best_index]) result.best_index = c;
    result.best = grid[result.best_index];
    return result;
}

struct FoldOutcome {
    MetricSet metrics;
    HyperParams chosen;
    std::size_t chosen_index = 0;
    std::vector<double> inner_mean_f1; // per grid cell
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

struct CVResult {
    std::vector<FoldOutcome> folds;
    std::map<std::string, MeanStd> summary; // per metric name
    HyperGrid grid;                         // canonical cell order

    static constexpr const char* kMetricNames[6] = {"accuracy", "precision", "recall",
                                                    "f1",       "auc_roc",   "auc_pr"};
};

namespace detail {

inline double metric_by_name(const MetricSet& m, const std::string& name) {
    if (name == "accuracy") return m.accuracy;
    if (name == "precision") return m.precision;
    if (name == "recall") return m.recall;
    if (name == "f1") return m.f1;
    if (name == "auc_roc") return m.auc_roc;
    return m.auc_pr;
}

} // namespace detail

/// Outer stratified folds; each one runs the inner grid search on its
/// training part, refits the winner, and scores the held-out fold.
inline CVResult nested_cv(ModelKind kind, const HyperGrid& grid,
                          const std::vector<std::vector<double>>& X,
                          const std::vector<int>& y, int outer, int inner,
                          std::uint64_t seed) {
    const auto fold_of = stratified_fold_assignment(y, outer, seed, 0x0A7E5);
    CVResult result;
    result.grid = grid;
    result.folds.resize(static_cast<std::size_t>(outer));

    parallel_for(static_cast<std::size_t>(outer), [&](std::size_t fold) {
        std::vector<std::vector<double>> train_x, val_x;
        std::vector<int> train_y, val_y;
        for (std::size_t i = 0; i < X.size(); ++i) {
            if (fold_of[i] == static_cast<int>(fold)) {
                val_x.push_back(X[i]);
                val_y.push_back(y[i]);
            } else {
                train_x.push_back(X[i]);
                train_y.push_back(y[i]);
            }
        }
        const auto search = grid_search_inner(kind, grid, train_x, train_y, inner,
                                              rng::derive(seed, 0x66 + fold));
        const auto model = learners::fit(kind, search.best, train_x, train_y,
                                         rng::derive(seed, 0x99000 + fold));
        const auto proba = learners::predict_proba(model, val_x);
        std::vector<int> pred(proba.size());
        for (std::size_t i = 0; i < proba.size(); ++i) pred[i] = proba[i] >= 0.5 ? 1 : 0;

        FoldOutcome outcome;
        outcome.metrics = metrics::full_metric_set(val_y, pred, proba);
        outcome.chosen = search.best;
        outcome.chosen_index = search.best_index;
        outcome.inner_mean_f1 = search.mean_f1;
        result.folds[fold] = std::move(outcome);
    });

    for (const auto* name : CVResult::kMetricNames) {
        std::vector<double> values;
        values.reserve(result.folds.size());
        for (const auto& fold : result.folds)
            values.push_back(detail::metric_by_name(fold.metrics, name));
        result.summary[name] = {stats::mean(values), stats::stddev(values)};
    }
    return result;
}

enum class SelectionRationale { modal_config, best_mean_inner_f1 };

struct FinalSelection {
    HyperParams chosen;
    std::size_t chosen_index = 0;
    SelectionRationale rationale = SelectionRationale::modal_config;
};

/// A configuration chosen by a strict majority of outer folds wins outright;
/// otherwise the cell with the highest mean inner F1 across folds is taken
/// (ties keep the earlier cell in canonical grid order).
inline FinalSelection select_final(const CVResult& cv) {
    if (cv.folds.empty()) throw Error("select_final on empty CV result");
    std::map<std::size_t, int> votes;
    for (const auto& fold : cv.folds) ++votes[fold.chosen_index];
    const auto majority = static_cast<int>(cv.folds.size() / 2) + 1;
    FinalSelection sel;
    for (const auto& [index, count] : votes) {
        if (count >= majority) {
            sel.chosen_index = index;
            sel.chosen = cv.grid.at(index);
            sel.rationale = SelectionRationale::modal_config;
            return sel;
        }
    }
    const std::size_t cells = cv.folds.front().inner_mean_f1.size();
    std::vector<double> mean_inner(cells, 0.0);
    for (const auto& fold : cv.folds)
        for (std::size_t c = 0; c < cells; ++c)
            mean_inner[c] += fold.inner_mean_f1[c] / static_cast<double>(cv.folds.size());
    std::size_t best = 0;
    for (std::size_t c = 1; c < cells; ++c)
        if (mean_inner[c] > mean_inner[best]) best = c;
    sel.chosen_index = best;
    sel.chosen = cv.grid.at(best);
    sel.rationale = SelectionRationale::best_mean_inner_f1;
    return sel;
}

/// Full metric set of a fitted model on untouched holdout rows.
inline MetricSet evaluate_holdout(const FittedModel& model,
                                  const std::vector<std::vector<double>>& X_test,
                                  const std::vector<int>& y_test) {
    const auto proba = learners::predict_proba(model, X_test);
    std::vector<int> pred(proba.size());
    for (std::size_t i = 0; i < proba.size(); ++i) pred[i] = proba[i] >= 0.5 ? 1 : 0;
    return metrics::full_metric_set(y_test, pred, proba);
}

} // namespace protoscope::eval
