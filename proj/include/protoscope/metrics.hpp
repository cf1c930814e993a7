#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "protoscope/errors.hpp"
#include "protoscope/stats.hpp"

namespace protoscope::metrics {

struct MetricSet {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double auc_roc = 0.0;
    double auc_pr = 0.0;
};

struct ConfusionMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Precision and recall use the 0/0 -> 0 convention, which penalizes
/// degenerate all-negative predictors during F1 optimization.
inline ConfusionMetrics confusion_metrics(const std::vector<int>& y_true,
                                          const std::vector<int>& y_pred) {
    if (y_true.size() != y_pred.size()) throw LengthMismatch();
    if (y_true.empty()) throw LengthMismatch("empty label vectors");
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const bool truth = y_true[i] == 1;
        const bool pred = y_pred[i] == 1;
        if (truth && pred) ++tp;
        else if (!truth && pred) ++fp;
        else if (truth && !pred) ++fn;
        else ++tn;
    }
    ConfusionMetrics m;
    m.accuracy = (tp + tn) / static_cast<double>(y_true.size());
    m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

/// Mann-Whitney AUC with half-credit for tied scores.
inline double auc_roc(const std::vector<int>& y_true, const std::vector<double>& scores) {
    if (y_true.size() != scores.size()) throw LengthMismatch();
    double n_pos = 0, n_neg = 0;
    for (const int v : y_true) (v == 1 ? n_pos : n_neg) += 1.0;
    if (n_pos == 0 || n_neg == 0) throw SingleClass("auc_roc needs both classes");

    const auto ranks = stats::average_ranks(scores);
    double rank_sum_pos = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i)
        if (y_true[i] == 1) rank_sum_pos += ranks[i];
    const double u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    return u / (n_pos * n_neg);
}

/// Average precision: sum of (recall_k - recall_{k-1}) * precision_k over
/// descending unique score thresholds (step interpolation).
inline double auc_pr(const std::vector<int>& y_true, const std::vector<double>& scores) {
    if (y_true.size() != scores.size()) throw LengthMismatch();
    double n_pos = 0;
    for (const int v : y_true) n_pos += v == 1 ? 1.0 : 0.0;
    if (n_pos == 0) throw NoPositives("auc_pr needs at least one positive");

    std::vector<std::size_t> order(y_true.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double tp = 0, fp = 0, prev_recall = 0.0, ap = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) (y_true[order[k]] == 1 ? tp : fp) += 1.0;
        const double recall = tp / n_pos;
        const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return ap;
}

inline MetricSet full_metric_set(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred,
                                 const std::vector<double>& scores) {
    const auto cm = confusion_metrics(y_true, y_pred);
    MetricSet m;
    m.accuracy = cm.accuracy;
    m.precision = cm.precision;
    m.recall = cm.recall;
    m.f1 = cm.f1;
    m.auc_roc = auc_roc(y_true, scores);
    m.auc_pr = auc_pr(y_true, scores);
    return m;
}

/// "0.83 ± 0.08" two-decimal rendering used by the report tables.
inline std::string mean_std_string(double mean, double std) {
    return stats::format_fixed2(mean) + " ± " + stats::format_fixed2(std);
}

} // namespace protoscope::metrics
