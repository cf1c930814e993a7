#pragma once

// Shapley attributions under the interventional (background-marginal) value
// function v(S) = mean over background rows b of f(x_S ++ b_rest). Three
// routes: brute-force enumeration (the oracle), the Shapley-kernel weighted
// least squares, and tree-structured exact attribution. All three agree for
// small d, which the test suite asserts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "protoscope/errors.hpp"
#include "protoscope/learners/model.hpp"
#include "protoscope/parallel.hpp"
#include "protoscope/rng.hpp"
#include "protoscope/stats.hpp"

namespace protoscope::shap {

using learners::FittedModel;
using learners::ModelKind;
using learners::Tree;

using ModelFn = std::function<double(const std::vector<double>&)>;

inline ModelFn probability_fn(const FittedModel& model) {
    return [&model](const std::vector<double>& row) { return learners::predict_row(model, row); };
}

struct AttributionRow {
    std::vector<double> phi;
    double base = 0.0;
    bool regularized = false; // kernel solve needed a ridge fallback
};

/// Per-instance, per-feature Shapley values for one model on one dataset.
struct Attribution {
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> phi; // n x d
    double base_value = 0.0;
};

namespace detail {

inline double coalition_value(const ModelFn& f, const std::vector<double>& x,
                              const std::vector<std::vector<double>>& background,
                              std::uint64_t mask) {
    double total = 0.0;
    std::vector<double> z(x.size());
    for (const auto& b : background) {
        for (std::size_t j = 0; j < x.size(); ++j)
            z[j] = (mask >> j) & 1u ? x[j] : b[j];
        total += f(z);
    }
    return total / static_cast<double>(background.size());
}

inline std::vector<double> factorials(std::size_t n) {
    std::vector<double> fact(n + 1, 1.0);
    for (std::size_t i = 1; i <= n; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
    return fact;
}

/// phi from a fully enumerated coalition value table.
inline std::vector<double> shapley_from_table(const std::vector<double>& v, std::size_t d) {
    const auto fact = factorials(d);
    std::vector<double> weight(d, 0.0);
    for (std::size_t s = 0; s < d; ++s)
        weight[s] = fact[s] * fact[d - 1 - s] / fact[d];
    std::vector<double> phi(d, 0.0);
    const std::uint64_t full = (1ull << d);
    for (std::uint64_t mask = 0; mask < full; ++mask) {
        const auto s = static_cast<std::size_t>(__builtin_popcountll(mask));
        for (std::size_t j = 0; j < d; ++j) {
            if ((mask >> j) & 1u) continue;
            phi[j] += weight[s] * (v[mask | (1ull << j)] - v[mask]);
        }
    }
    return phi;
}

} // namespace detail

/// Brute-force enumeration of all 2^d coalitions; the oracle the other two
/// methods are checked against.
inline AttributionRow exact_shapley(const ModelFn& f, const std::vector<double>& x,
                                    const std::vector<std::vector<double>>& background) {
    const std::size_t d = x.size();
    if (d > 15) throw TooManyFeatures("exact enumeration capped at d = 15");
    if (background.empty()) throw Error("background set must be nonempty");
    const std::uint64_t full = 1ull << d;
    std::vector<double> v(full);
    for (std::uint64_t mask = 0; mask < full; ++mask)
        v[mask] = detail::coalition_value(f, x, background, mask);
    AttributionRow row;
    row.phi = detail::shapley_from_table(v, d);
    row.base = v[0];
    return row;
}

// ---------------------------------------------------------------------------
// Kernel SHAP

namespace detail {

/// Solve A p = r by Gaussian elimination with partial pivoting. Returns false
/// on a vanishing pivot.
inline bool solve_linear(std::vector<std::vector<double>> A, std::vector<double> r,
                         std::vector<double>& out) {
    const std::size_t n = r.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t i = col + 1; i < n; ++i)
            if (std::abs(A[i][col]) > std::abs(A[pivot][col])) pivot = i;
        if (std::abs(A[pivot][col]) < 1e-12) return false;
        std::swap(A[pivot], A[col]);
        std::swap(r[pivot], r[col]);
        for (std::size_t i = col + 1; i < n; ++i) {
            const double factor = A[i][col] / A[col][col];
            for (std::size_t j = col; j < n; ++j) A[i][j] -= factor * A[col][j];
            r[i] -= factor * r[col];
        }
    }
    out.assign(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double acc = r[i];
        for (std::size_t j = i + 1; j < n; ++j) acc -= A[i][j] * out[j];
        out[i] = acc / A[i][i];
    }
    return true;
}

inline double binomial(std::size_t n, std::size_t k) {
    double result = 1.0;
    for (std::size_t i = 0; i < k; ++i)
        result = result * static_cast<double>(n - i) / static_cast<double>(i + 1);
    return result;
}

} // namespace detail

/// Shapley-kernel weighted least squares over sampled coalitions, with the
/// efficiency constraint enforced by eliminating the last feature. When
/// n_coalitions covers every proper nonempty subset the solution equals the
/// exact Shapley values.
inline AttributionRow kernel_shap(const ModelFn& f, const std::vector<double>& x,
                                  const std::vector<std::vector<double>>& background,
                                  std::size_t n_coalitions, std::uint64_t seed = 1) {
    const std::size_t d = x.size();
    if (d < 2) throw TooManyFeatures("kernel_shap needs d >= 2");
    if (background.empty()) throw Error("background set must be nonempty");
    if (n_coalitions < 2 * d) throw BadConfig("kernel_shap needs n_coalitions >= 2d");

    const double base = detail::coalition_value(f, x, background, 0);
    std::vector<double> z_full(x);
    const double fx = detail::coalition_value(f, x, background, ~0ull);

    // (mask, weight) pairs; full/empty handled by the constraint
    std::vector<std::pair<std::uint64_t, double>> coalitions;
    const bool enumerable = d < 60 && n_coalitions >= (1ull << d) - 2;
    if (enumerable) {
        const std::uint64_t full = (1ull << d) - 1;
        for (std::uint64_t mask = 1; mask < full; ++mask) {
            const auto s = static_cast<std::size_t>(__builtin_popcountll(mask));
            const double w = static_cast<double>(d - 1) /
                             (detail::binomial(d, s) * static_cast<double>(s) *
                              static_cast<double>(d - s));
            coalitions.emplace_back(mask, w);
        }
    } else {
        // sample sizes from the kernel-mass distribution, subsets uniformly
        rng::Stream stream(seed, 0x5AAB);
        std::vector<double> size_mass(d, 0.0); // index s in [1, d-1]
        double total_mass = 0.0;
        for (std::size_t s = 1; s < d; ++s) {
            size_mass[s] = static_cast<double>(d - 1) /
                           (static_cast<double>(s) * static_cast<double>(d - s));
            total_mass += size_mass[s];
        }
        std::vector<int> pool(static_cast<int>(d));
        for (std::size_t k = 0; k < n_coalitions; ++k) {
            double pick = stream.uniform() * total_mass;
            std::size_t size = 1;
            for (; size < d - 1; ++size) {
                if (pick < size_mass[size]) break;
                pick -= size_mass[size];
            }
            std::iota(pool.begin(), pool.end(), 0);
            std::uint64_t mask = 0;
            for (std::size_t k2 = 0; k2 < size; ++k2) {
                const auto j = static_cast<std::size_t>(
                    stream.uniform_int(static_cast<std::int64_t>(k2),
                                       static_cast<std::int64_t>(d) - 1));
                std::swap(pool[k2], pool[j]);
                mask |= 1ull << pool[k2];
            }
            coalitions.emplace_back(mask, 1.0);
        }
    }

    // eliminate phi[d-1]: t = v(S) - base - z_last (fx - base),
    // predictors u_j = z_j - z_last
    const std::size_t m = d - 1;
    std::vector<std::vector<double>> A(m, std::vector<double>(m, 0.0));
    std::vector<double> rhs(m, 0.0);
    std::vector<double> u(m);
    for (const auto& [mask, w] : coalitions) {
        const double v = detail::coalition_value(f, x, background, mask);
        const double z_last = (mask >> (d - 1)) & 1u ? 1.0 : 0.0;
        const double t = v - base - z_last * (fx - base);
        for (std::size_t j = 0; j < m; ++j)
            u[j] = (((mask >> j) & 1u) ? 1.0 : 0.0) - z_last;
        for (std::size_t a = 0; a < m; ++a) {
            if (u[a] == 0.0) continue;
            rhs[a] += w * u[a] * t;
            for (std::size_t b2 = 0; b2 < m; ++b2) A[a][b2] += w * u[a] * u[b2];
        }
    }

    AttributionRow row;
    row.base = base;
    std::vector<double> reduced;
    if (!detail::solve_linear(A, rhs, reduced)) {
        for (std::size_t j = 0; j < m; ++j) A[j][j] += 1e-8; // ridge fallback
        row.regularized = true;
        if (!detail::solve_linear(A, rhs, reduced))
            throw Error("kernel_shap: system singular even after regularization");
    }
    row.phi = reduced;
    double sum = 0.0;
    for (const double p : reduced) sum += p;
    row.phi.push_back(fx - base - sum);
    return row;
}

// ---------------------------------------------------------------------------
// Tree SHAP (interventional, exact per background row)

namespace detail {

/// Exact Shapley values of the two-reference game x-vs-b on one tree, found
/// by walking every root-to-leaf path and tracking which diverging features
/// the path forces into (U) or out of (V) the coalition.
class TreePairShap {
public:
    TreePairShap(const Tree& tree, const std::vector<double>& x, const std::vector<double>& b,
                 std::vector<double>& phi, double scale)
        : tree_(tree), x_(x), b_(b), phi_(phi), scale_(scale),
          assign_(x.size(), 0), fact_(factorials(x.size() + 1)) {
        walk(0);
    }

private:
    void walk(int node_index) {
        const auto& node = tree_.nodes[static_cast<std::size_t>(node_index)];
        if (node.is_leaf()) {
            const std::size_t u = in_.size(), v = out_.size();
            if (u + v == 0) return; // reached for every coalition; no attribution
            const double w = node.value * scale_;
            if (u > 0) {
                const double share = fact_[u - 1] * fact_[v] / fact_[u + v];
                for (const int j : in_) phi_[static_cast<std::size_t>(j)] += w * share;
            }
            if (v > 0) {
                const double share = fact_[u] * fact_[v - 1] / fact_[u + v];
                for (const int j : out_) phi_[static_cast<std::size_t>(j)] -= w * share;
            }
            return;
        }
        const auto f = static_cast<std::size_t>(node.feature);
        const int x_child = x_[f] < node.threshold ? node.left : node.right;
        const int b_child = b_[f] < node.threshold ? node.left : node.right;
        if (assign_[f] == 1) {
            walk(x_child);
        } else if (assign_[f] == 2) {
            walk(b_child);
        } else if (x_child == b_child) {
            walk(x_child);
        } else {
            assign_[f] = 1;
            in_.push_back(node.feature);
            walk(x_child);
            in_.pop_back();
            assign_[f] = 2;
            out_.push_back(node.feature);
            walk(b_child);
            out_.pop_back();
            assign_[f] = 0;
        }
    }

    const Tree& tree_;
    const std::vector<double>& x_;
    const std::vector<double>& b_;
    std::vector<double>& phi_;
    double scale_;
    std::vector<std::int8_t> assign_; // 0 free, 1 forced to x, 2 forced to b
    std::vector<int> in_, out_;
    std::vector<double> fact_;
};

/// Features on which x and b take different sides of any split in the
/// ensemble; every other feature is a dummy of the two-reference game.
inline std::vector<std::size_t> diverging_features(const std::vector<const Tree*>& trees,
                                                   const std::vector<double>& x,
                                                   const std::vector<double>& b) {
    std::vector<bool> diverges(x.size(), false);
    for (const auto* tree : trees)
        for (const auto& node : tree->nodes) {
            if (node.is_leaf()) continue;
            const auto f = static_cast<std::size_t>(node.feature);
            if ((x[f] < node.threshold) != (b[f] < node.threshold)) diverges[f] = true;
        }
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (diverges[j]) out.push_back(j);
    return out;
}

} // namespace detail

/// Interventional tree attribution. DT and RF decompose per tree via the
/// path-walk recursion (RF votes are binarized, matching predict_proba). GB's
/// sigmoid couples the trees, so the two-reference game is enumerated exactly
/// over the features where x and b actually diverge.
inline AttributionRow tree_shap(const FittedModel& model, const std::vector<double>& x,
                                const std::vector<std::vector<double>>& background) {
    if (model.kind != ModelKind::DT && model.kind != ModelKind::RF &&
        model.kind != ModelKind::GB)
        throw UnsupportedKind("tree_shap supports DT, RF, GB");
    if (background.empty()) throw Error("background set must be nonempty");
    const std::size_t d = x.size();
    AttributionRow row;
    row.phi.assign(d, 0.0);

    const double inv_b = 1.0 / static_cast<double>(background.size());
    if (model.kind == ModelKind::DT) {
        const auto& tree = std::get<Tree>(model.impl);
        double base = 0.0;
        for (const auto& b : background) {
            detail::TreePairShap(tree, x, b, row.phi, inv_b);
            base += tree.leaf_value(b) * inv_b;
        }
        row.base = base;
        return row;
    }
    if (model.kind == ModelKind::RF) {
        const auto& forest = std::get<learners::RandomForestModel>(model.impl);
        // vote trees: leaf >= 0.5 counts 1, else 0
        std::vector<Tree> vote_trees(forest.trees.size());
        for (std::size_t t = 0; t < forest.trees.size(); ++t) {
            vote_trees[t] = forest.trees[t];
            for (auto& node : vote_trees[t].nodes)
                if (node.is_leaf()) node.value = node.value >= 0.5 ? 1.0 : 0.0;
        }
        const double scale = inv_b / static_cast<double>(vote_trees.size());
        double base = 0.0;
        for (const auto& b : background) {
            for (const auto& tree : vote_trees) {
                detail::TreePairShap(tree, x, b, row.phi, scale);
                base += tree.leaf_value(b) * scale;
            }
        }
        row.base = base;
        return row;
    }

    // GB: probability-space game, exact over diverging features
    const auto& gb = std::get<learners::GradientBoostingModel>(model.impl);
    std::vector<const Tree*> trees;
    trees.reserve(gb.trees.size());
    for (const auto& t : gb.trees) trees.push_back(&t);

    double base = 0.0;
    for (const auto& b : background) {
        const auto players = detail::diverging_features(trees, x, b);
        const std::size_t k = players.size();
        if (k > 20) throw TooManyFeatures("too many diverging features for exact GB game");
        base += gb.probability(b) * inv_b;
        if (k == 0) continue;
        const std::uint64_t full = 1ull << k;
        std::vector<double> v(full);
        std::vector<double> z(b);
        for (std::uint64_t mask = 0; mask < full; ++mask) {
            for (std::size_t j = 0; j < k; ++j) z[players[j]] = (mask >> j) & 1u ? x[players[j]] : b[players[j]];
            v[mask] = gb.probability(z);
        }
        const auto phi_k = detail::shapley_from_table(v, k);
        for (std::size_t j = 0; j < k; ++j) row.phi[players[j]] += phi_k[j] * inv_b;
    }
    row.base = base;
    return row;
}

// ---------------------------------------------------------------------------
// Dataset-level explanation and aggregation

struct ExplainSettings {
    std::size_t background_size = 100;
    std::size_t n_coalitions = 4096;
    double trend_threshold = 0.3;
    std::uint64_t seed = 1;
};

/// Seeded subsample of training rows used as the background set.
inline std::vector<std::vector<double>> background_sample(
    const std::vector<std::vector<double>>& train, std::size_t limit, std::uint64_t seed) {
    if (train.size() <= limit) return train;
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng::Stream stream(seed, 0xBA5E);
    stream.shuffle(idx);
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    std::vector<std::vector<double>> out;
    out.reserve(limit);
    for (const auto i : idx) out.push_back(train[i]);
    return out;
}

/// Kernel explainer for LR/MLP, tree explainer for DT/RF/GB.
inline Attribution explain_dataset(const FittedModel& model,
                                   const std::vector<std::string>& feature_names,
                                   const std::vector<std::vector<double>>& rows,
                                   const std::vector<std::vector<double>>& background,
                                   const ExplainSettings& settings = {}) {
    Attribution attribution;
    attribution.feature_names = feature_names;
    attribution.phi.resize(rows.size());
    const bool tree_kind = model.kind == ModelKind::DT || model.kind == ModelKind::RF ||
                           model.kind == ModelKind::GB;
    const auto fn = probability_fn(model);
    std::vector<double> bases(rows.size(), 0.0);
    parallel_for(rows.size(), [&](std::size_t i) {
        const auto row = tree_kind
                             ? tree_shap(model, rows[i], background)
                             : kernel_shap(fn, rows[i], background, settings.n_coalitions,
                                           rng::derive(settings.seed, i));
        attribution.phi[i] = row.phi;
        bases[i] = row.base;
    });
    attribution.base_value = rows.empty() ? 0.0 : bases[0];
    return attribution;
}

struct ImportanceEntry {
    std::string feature;
    double mean_abs_phi = 0.0;
};
using ImportanceRanking = std::vector<ImportanceEntry>;

/// Mean |phi| per feature, descending; ties keep feature order.
inline ImportanceRanking rank_importance(const Attribution& attribution) {
    if (attribution.phi.empty()) throw Error("rank_importance on empty attribution");
    const std::size_t d = attribution.feature_names.size();
    std::vector<double> mean_abs(d, 0.0);
    for (const auto& row : attribution.phi)
        for (std::size_t j = 0; j < d; ++j) mean_abs[j] += std::abs(row[j]);
    for (auto& v : mean_abs) v /= static_cast<double>(attribution.phi.size());

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return mean_abs[a] > mean_abs[b]; });
    ImportanceRanking ranking;
    for (const auto j : order) ranking.push_back({attribution.feature_names[j], mean_abs[j]});
    return ranking;
}

struct BeeswarmPoint {
    std::string feature;
    std::size_t feature_rank = 0; // importance order, 0 = most important
    std::size_t row = 0;
    double phi = 0.0;
    double color = 0.0; // min-max normalized feature value
};

/// One point per (row, feature), features ordered by importance, colors
/// normalized per feature column (constant columns color 0.5).
inline std::vector<BeeswarmPoint> beeswarm_data(const Attribution& attribution,
                                                const std::vector<std::vector<double>>& X) {
    if (X.size() != attribution.phi.size() ||
        (!X.empty() && X[0].size() != attribution.feature_names.size()))
        throw ShapeMismatch("beeswarm_data: attribution and X disagree");
    const auto ranking = rank_importance(attribution);
    std::vector<BeeswarmPoint> points;
    points.reserve(X.size() * attribution.feature_names.size());
    for (std::size_t r = 0; r < ranking.size(); ++r) {
        std::size_t j = 0;
        while (attribution.feature_names[j] != ranking[r].feature) ++j;
        std::vector<double> column(X.size());
        for (std::size_t i = 0; i < X.size(); ++i) column[i] = X[i][j];
        const auto [lo_it, hi_it] = std::minmax_element(column.begin(), column.end());
        const double lo = *lo_it, hi = *hi_it;
        for (std::size_t i = 0; i < X.size(); ++i) {
            BeeswarmPoint p;
            p.feature = ranking[r].feature;
            p.feature_rank = r;
            p.row = i;
            p.phi = attribution.phi[i][j];
            p.color = hi > lo ? (column[i] - lo) / (hi - lo) : 0.5;
            points.push_back(p);
        }
    }
    return points;
}

enum class Direction { direct, inverse, none };

inline const char* to_string(Direction d) {
    switch (d) {
        case Direction::direct: return "direct";
        case Direction::inverse: return "inverse";
        default: return "none";
    }
}

inline Direction direction_from_string(const std::string& s) {
    if (s == "direct") return Direction::direct;
    if (s == "inverse") return Direction::inverse;
    return Direction::none;
}

/// Spearman correlation between feature values and their phi column;
/// |rho| below the threshold (or a constant column) reads as none. A feature
/// whose mean |phi| is negligible next to the model's strongest feature also
/// reads as none: its beeswarm hugs zero, which is "no observable trend" no
/// matter how consistently the residual attribution orders.
inline std::map<std::string, Direction> trend_direction(
    const Attribution& attribution, const std::vector<std::vector<double>>& X,
    double threshold = 0.3, double min_importance_fraction = 0.05) {
    if (X.size() != attribution.phi.size())
        throw ShapeMismatch("trend_direction: attribution and X disagree");
    const std::size_t d = attribution.feature_names.size();
    std::vector<double> mean_abs(d, 0.0);
    for (const auto& row : attribution.phi)
        for (std::size_t j = 0; j < d; ++j) mean_abs[j] += std::abs(row[j]);
    double top = 0.0;
    for (auto& v : mean_abs) {
        v /= static_cast<double>(std::max<std::size_t>(attribution.phi.size(), 1));
        top = std::max(top, v);
    }

    std::map<std::string, Direction> out;
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> column(X.size()), phi(X.size());
        for (std::size_t i = 0; i < X.size(); ++i) {
            column[i] = X[i][j];
            phi[i] = attribution.phi[i][j];
        }
        Direction dir = Direction::none;
        const bool negligible = mean_abs[j] < min_importance_fraction * top;
        if (!negligible && !stats::is_constant(column) && !stats::is_constant(phi)) {
            const double rho = stats::spearman(column, phi);
            if (rho >= threshold) dir = Direction::direct;
            else if (rho <= -threshold) dir = Direction::inverse;
        }
        out[attribution.feature_names[j]] = dir;
    }
    return out;
}

struct ModelExplanation {
    std::string model;
    double holdout_f1 = 0.0;
    ImportanceRanking ranking;
    std::map<std::string, Direction> trends;
};

struct TrendCell {
    std::string model;
    std::string feature;
    int rank = 0;               // 1-based importance rank
    double impact_weight = 0.0; // (6 - rank) * holdout F1 inside the top five
    Direction direction = Direction::none;
};

struct TrendSummary {
    std::vector<std::string> models;
    std::vector<std::string> feature_universe; // before reduction
    std::vector<TrendCell> cells;              // absent feature -> no cell
};

/// Rank-score (6 - rank) for the top five, weighted by each model's holdout
/// F1. Features removed by reduction have no cell (no bubble).
inline TrendSummary weighted_cross_model_summary(
    const std::vector<ModelExplanation>& explanations,
    const std::vector<std::string>& feature_universe) {
    TrendSummary summary;
    summary.feature_universe = feature_universe;
    for (const auto& exp : explanations) {
        summary.models.push_back(exp.model);
        for (std::size_t r = 0; r < exp.ranking.size(); ++r) {
            TrendCell cell;
            cell.model = exp.model;
            cell.feature = exp.ranking[r].feature;
            cell.rank = static_cast<int>(r) + 1;
            cell.impact_weight =
                cell.rank <= 5 ? (6.0 - cell.rank) * exp.holdout_f1 : 0.0;
            const auto it = exp.trends.find(cell.feature);
            cell.direction = it == exp.trends.end() ? Direction::none : it->second;
            summary.cells.push_back(std::move(cell));
        }
    }
    return summary;
}

} // namespace protoscope::shap
