#pragma once

#include <map>
#include <string>
#include <vector>

#include "protoscope/errors.hpp"

namespace protoscope::learners {

enum class ModelKind { LR, DT, RF, GB, MLP };

inline const char* kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::LR: return "LR";
        case ModelKind::DT: return "DT";
        case ModelKind::RF: return "RF";
        case ModelKind::GB: return "GB";
        case ModelKind::MLP: return "MLP";
    }
    return "?";
}

inline ModelKind kind_from_name(const std::string& name) {
    if (name == "LR") return ModelKind::LR;
    if (name == "DT") return ModelKind::DT;
    if (name == "RF") return ModelKind::RF;
    if (name == "GB") return ModelKind::GB;
    if (name == "MLP") return ModelKind::MLP;
    throw BadConfig("unknown model kind: " + name);
}

inline constexpr ModelKind kAllKinds[] = {ModelKind::LR, ModelKind::DT, ModelKind::RF,
                                          ModelKind::GB, ModelKind::MLP};

/// LR and MLP are scale-sensitive; trees are not.
inline bool requires_standardization(ModelKind kind) {
    return kind == ModelKind::LR || kind == ModelKind::MLP;
}

/// Named hyperparameter set. std::map keeps a canonical key order so equality
/// and serialization are deterministic.
struct HyperParams {
    std::map<std::string, double> values;

    double get(const std::string& name, double fallback) const {
        const auto it = values.find(name);
        return it == values.end() ? fallback : it->second;
    }
    HyperParams& set(const std::string& name, double v) {
        values[name] = v;
        return *this;
    }
    friend bool operator==(const HyperParams&, const HyperParams&) = default;

    std::string to_string() const {
        std::string out = "{";
        for (const auto& [k, v] : values) {
            if (out.size() > 1) out += ", ";
            out += k + "=" + std::to_string(v);
        }
        return out + "}";
    }
};

/// A grid is an explicit cell list; the vector order is the canonical
/// tie-break order for grid search.
using HyperGrid = std::vector<HyperParams>;

/// Cartesian expansion with the first listed parameter varying slowest.
inline HyperGrid cartesian_grid(
    const std::vector<std::pair<std::string, std::vector<double>>>& axes) {
    HyperGrid grid{HyperParams{}};
    for (const auto& [name, values] : axes) {
        HyperGrid expanded;
        for (const auto& cell : grid)
            for (const double v : values) expanded.push_back(HyperParams(cell).set(name, v));
        grid = std::move(expanded);
    }
    return grid;
}

inline HyperGrid default_grid(ModelKind kind) {
    switch (kind) {
        case ModelKind::LR:
            return cartesian_grid({{"lambda", {0.001, 0.01, 0.1, 1.0}}});
        case ModelKind::DT:
            return cartesian_grid({{"max_depth", {2, 3, 4, 6, 8}}, {"min_leaf", {1, 5, 10}}});
        case ModelKind::RF:
            return cartesian_grid(
                {{"n_trees", {100, 300}}, {"max_depth", {4, 8, 0}}, {"min_leaf", {1, 5}}});
        case ModelKind::GB:
            return cartesian_grid({{"n_stages", {100, 300}},
                                   {"shrinkage", {0.05, 0.1}},
                                   {"max_depth", {2, 3}}});
        case ModelKind::MLP: {
            HyperGrid grid;
            for (const auto& [h1, h2] : {std::pair{16.0, 0.0}, {32.0, 0.0}, {32.0, 16.0}})
                for (const double lr : {0.01, 0.001})
                    grid.push_back(HyperParams{}
                                       .set("h1", h1)
                                       .set("h2", h2)
                                       .set("learning_rate", lr)
                                       .set("epochs", 500));
            return grid;
        }
    }
    return {};
}

} // namespace protoscope::learners
