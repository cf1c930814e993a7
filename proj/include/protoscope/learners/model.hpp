#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "protoscope/errors.hpp"
#include "protoscope/learners/decision_tree.hpp"
#include "protoscope/learners/gradient_boosting.hpp"
#include "protoscope/learners/logistic.hpp"
#include "protoscope/learners/mlp.hpp"
#include "protoscope/learners/params.hpp"
#include "protoscope/learners/random_forest.hpp"
#include "protoscope/learners/standardize.hpp"

namespace protoscope::learners {

/// A trained classifier of one of the five kinds. Immutable after fit; safe
/// to share across threads for prediction.
struct FittedModel {
    ModelKind kind = ModelKind::LR;
    HyperParams params;
    std::uint64_t seed = 0;
    std::size_t n_features = 0;
    std::optional<Standardizer> standardizer;
    std::variant<LogisticModel, Tree, RandomForestModel, GradientBoostingModel, MlpModel> impl;
};

inline void validate_training_inputs(const std::vector<std::vector<double>>& X,
                                     const std::vector<int>& y) {
    if (X.size() < 2 || X.size() != y.size())
        throw Error("fit requires n >= 2 rows with one label each");
    bool has_pos = false, has_neg = false;
    for (const int v : y) (v == 1 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw SingleClassTraining();
    for (const auto& row : X) {
        if (row.size() != X[0].size()) throw SchemaMismatch("ragged feature matrix");
        for (const double v : row)
            if (!std::isfinite(v)) throw NonFiniteFeature();
    }
}

inline FittedModel fit(ModelKind kind, const HyperParams& params,
                       const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                       std::uint64_t seed) {
    validate_training_inputs(X, y);
    FittedModel model;
    model.kind = kind;
    model.params = params;
    model.seed = seed;
    model.n_features = X[0].size();

    const std::vector<std::vector<double>>* features = &X;
    std::vector<std::vector<double>> standardized;
    if (requires_standardization(kind)) {
        model.standardizer = Standardizer::fit(X);
        standardized = model.standardizer->apply_all(X);
        features = &standardized;
    }

    switch (kind) {
        case ModelKind::LR:
            model.impl = fit_logistic(*features, y, params.get("lambda", 0.1));
            break;
        case ModelKind::DT: {
            tree_detail::TreeFitConfig cfg;
            cfg.max_depth = static_cast<int>(params.get("max_depth", 0));
            cfg.min_leaf = static_cast<int>(params.get("min_leaf", 1));
            std::vector<std::size_t> all(X.size());
            std::iota(all.begin(), all.end(), 0);
            model.impl = fit_classification_tree(*features, y, all, cfg);
            break;
        }
        case ModelKind::RF:
            model.impl = fit_random_forest(*features, y,
                                           static_cast<int>(params.get("n_trees", 100)),
                                           static_cast<int>(params.get("max_depth", 0)),
                                           static_cast<int>(params.get("min_leaf", 1)), seed);
            break;
        case ModelKind::GB:
            model.impl = fit_gradient_boosting(*features, y,
                                               static_cast<int>(params.get("n_stages", 100)),
                                               params.get("shrinkage", 0.1),
                                               static_cast<int>(params.get("max_depth", 3)),
                                               static_cast<int>(params.get("min_leaf", 1)));
            break;
        case ModelKind::MLP: {
            std::vector<int> hidden{static_cast<int>(params.get("h1", 16)),
                                    static_cast<int>(params.get("h2", 0))};
            model.impl = fit_mlp(*features, y, hidden, params.get("learning_rate", 0.01),
                                 static_cast<int>(params.get("epochs", 500)), seed,
                                 static_cast<int>(params.get("batch", 32)));
            break;
        }
    }
    return model;
}

/// Probability of class 1 for a single row.
inline double predict_row(const FittedModel& model, const std::vector<double>& row) {
    if (row.size() != model.n_features)
        throw SchemaMismatch("row width " + std::to_string(row.size()) + " != trained width " +
                             std::to_string(model.n_features));
    const std::vector<double>* x = &row;
    std::vector<double> standardized;
    if (model.standardizer) {
        standardized = model.standardizer->apply(row);
        x = &standardized;
    }
    return std::visit(
        [&](const auto& impl) -> double {
            using T = std::decay_t<decltype(impl)>;
            if constexpr (std::is_same_v<T, LogisticModel>) return impl.probability(*x);
            else if constexpr (std::is_same_v<T, Tree>) return impl.leaf_value(*x);
            else if constexpr (std::is_same_v<T, RandomForestModel>) return impl.probability(*x);
            else if constexpr (std::is_same_v<T, GradientBoostingModel>)
                return impl.probability(*x);
            else return impl.probability(*x);
        },
        model.impl);
}

inline std::vector<double> predict_proba(const FittedModel& model,
                                         const std::vector<std::vector<double>>& X) {
    std::vector<double> out;
    out.reserve(X.size());
    for (const auto& row : X) out.push_back(predict_row(model, row));
    return out;
}

/// class = 1 iff probability >= threshold
inline std::vector<int> predict(const FittedModel& model,
                                const std::vector<std::vector<double>>& X,
                                double threshold = 0.5) {
    std::vector<int> out;
    out.reserve(X.size());
    for (const auto& row : X) out.push_back(predict_row(model, row) >= threshold ? 1 : 0);
    return out;
}

// ---------------------------------------------------------------------------
// JSON model artifacts

namespace model_json {

using nlohmann::json;

inline json tree_to_json(const Tree& tree) {
    json nodes = json::array();
    for (const auto& n : tree.nodes)
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right},
                         {"value", n.value},
                         {"n", n.n}});
    return nodes;
}

inline Tree tree_from_json(const json& nodes) {
    Tree tree;
    for (const auto& jn : nodes) {
        TreeNode n;
        n.feature = jn.at("feature").get<int>();
        n.threshold = jn.at("threshold").get<double>();
        n.left = jn.at("left").get<int>();
        n.right = jn.at("right").get<int>();
        n.value = jn.at("value").get<double>();
        n.n = jn.at("n").get<int>();
        tree.nodes.push_back(n);
    }
    return tree;
}

} // namespace model_json

inline nlohmann::json to_json(const FittedModel& model) {
    using nlohmann::json;
    json j;
    j["format_version"] = 1;
    j["kind"] = kind_name(model.kind);
    j["params"] = model.params.values;
    j["seed"] = model.seed;
    j["n_features"] = model.n_features;
    if (model.standardizer) {
        j["standardizer"] = {{"mean", model.standardizer->mean},
                             {"stddev", model.standardizer->stddev},
                             {"constant", model.standardizer->constant}};
    }
    std::visit(
        [&](const auto& impl) {
            using T = std::decay_t<decltype(impl)>;
            if constexpr (std::is_same_v<T, LogisticModel>) {
                j["logistic"] = {{"weights", impl.weights}, {"bias", impl.bias}};
            } else if constexpr (std::is_same_v<T, Tree>) {
                j["tree"] = model_json::tree_to_json(impl);
            } else if constexpr (std::is_same_v<T, RandomForestModel>) {
                auto trees = nlohmann::json::array();
                for (const auto& t : impl.trees) trees.push_back(model_json::tree_to_json(t));
                j["forest"] = std::move(trees);
            } else if constexpr (std::is_same_v<T, GradientBoostingModel>) {
                auto trees = nlohmann::json::array();
                for (const auto& t : impl.trees) trees.push_back(model_json::tree_to_json(t));
                j["boosting"] = {{"base_margin", impl.base_margin},
                                 {"trees", std::move(trees)},
                                 {"train_deviance", impl.train_deviance}};
            } else {
                j["mlp"] = {{"weights", impl.weights}, {"biases", impl.biases}};
            }
        },
        model.impl);
    return j;
}

inline FittedModel from_json(const nlohmann::json& j) {
    FittedModel model;
    model.kind = kind_from_name(j.at("kind").get<std::string>());
    for (const auto& [k, v] : j.at("params").items()) model.params.set(k, v.get<double>());
    model.seed = j.at("seed").get<std::uint64_t>();
    model.n_features = j.at("n_features").get<std::size_t>();
    if (j.contains("standardizer")) {
        Standardizer s;
        s.mean = j["standardizer"].at("mean").get<std::vector<double>>();
        s.stddev = j["standardizer"].at("stddev").get<std::vector<double>>();
        s.constant = j["standardizer"].at("constant").get<std::vector<bool>>();
        model.standardizer = std::move(s);
    }
    if (j.contains("logistic")) {
        LogisticModel m;
        m.weights = j["logistic"].at("weights").get<std::vector<double>>();
        m.bias = j["logistic"].at("bias").get<double>();
        model.impl = std::move(m);
    } else if (j.contains("tree")) {
        model.impl = model_json::tree_from_json(j["tree"]);
    } else if (j.contains("forest")) {
        RandomForestModel m;
        for (const auto& t : j["forest"]) m.trees.push_back(model_json::tree_from_json(t));
        model.impl = std::move(m);
    } else if (j.contains("boosting")) {
        GradientBoostingModel m;
        m.base_margin = j["boosting"].at("base_margin").get<double>();
        for (const auto& t : j["boosting"].at("trees"))
            m.trees.push_back(model_json::tree_from_json(t));
        m.train_deviance = j["boosting"].at("train_deviance").get<std::vector<double>>();
        model.impl = std::move(m);
    } else if (j.contains("mlp")) {
        MlpModel m;
        m.weights =
            j["mlp"].at("weights").get<std::vector<std::vector<std::vector<double>>>>();
        m.biases = j["mlp"].at("biases").get<std::vector<std::vector<double>>>();
        model.impl = std::move(m);
    } else {
        throw Error("model artifact lacks a learned-state block");
    }
    return model;
}

} // namespace protoscope::learners
