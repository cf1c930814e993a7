#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoscope/dataset.hpp"
#include "protoscope/errors.hpp"
#include "protoscope/learners/params.hpp"
#include "protoscope/synth.hpp"

namespace protoscope::config {

/// Run configuration. Populated from a flat key=value file, then overridden
/// by CLI flags. Keys are documented in the README.
struct RunConfig {
    std::string input_dir;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed; // required for build/train/explain/synth
    double test_fraction = 0.2;
    dataset::CorrelationThresholds correlation;
    int min_cohort_rows = 50;
    std::string cohort_filter; // "body_part/weighting/coil/plane"; empty = largest eligible

    // explanation settings
    std::size_t background_size = 100;
    std::size_t n_coalitions = 4096;
    double trend_threshold = 0.3;
    double trend_min_importance = 0.05; // fraction of the top mean |phi|
    std::size_t explain_rows = 64;

    // nested cross-validation
    int outer_folds = 10;
    int inner_folds = 3;
    std::map<std::string, learners::HyperGrid> grids; // per kind name; empty = defaults
    std::string grids_file;                           // JSON override, loaded by the commands

    std::string deny_list_file;

    // synthetic cohort generation
    std::size_t synth_n = 400;
    synth::PhysicsConfig physics;

    std::uint64_t require_seed() const {
        if (!seed) throw BadConfig("this command requires --seed (or seed= in the config file)");
        return *seed;
    }

    learners::HyperGrid grid_for(learners::ModelKind kind) const {
        const auto it = grids.find(learners::kind_name(kind));
        if (it != grids.end() && !it->second.empty()) return it->second;
        return learners::default_grid(kind);
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

} // namespace detail

/// Per-kind grid override: {"LR": [{"lambda": 0.1}, ...], ...}
inline std::map<std::string, learners::HyperGrid> grids_from_json(const nlohmann::json& j) {
    std::map<std::string, learners::HyperGrid> grids;
    for (const auto& [kind, cells] : j.items()) {
        learners::kind_from_name(kind); // validates
        learners::HyperGrid grid;
        for (const auto& cell : cells) {
            learners::HyperParams params;
            for (const auto& [name, value] : cell.items())
                params.set(name, value.get<double>());
            grid.push_back(std::move(params));
        }
        grids[kind] = std::move(grid);
    }
    return grids;
}

/// Flat "key = value" format; '#' starts a comment.
inline void apply_config_line(RunConfig& config, const std::string& key,
                              const std::string& value) {
    const auto as_double = [&] { return std::strtod(value.c_str(), nullptr); };
    const auto as_int = [&] { return static_cast<int>(std::strtol(value.c_str(), nullptr, 10)); };
    const auto as_size = [&] {
        return static_cast<std::size_t>(std::strtoull(value.c_str(), nullptr, 10));
    };

    if (key == "input_dir") config.input_dir = value;
    else if (key == "out_dir") config.out_dir = value;
    else if (key == "seed") config.seed = std::strtoull(value.c_str(), nullptr, 10);
    else if (key == "test_fraction") config.test_fraction = as_double();
    else if (key == "corr_both") config.correlation.both = as_double();
    else if (key == "corr_single") config.correlation.single = as_double();
    else if (key == "min_cohort_rows") config.min_cohort_rows = as_int();
    else if (key == "cohort_filter") config.cohort_filter = value;
    else if (key == "background_size") config.background_size = as_size();
    else if (key == "n_coalitions") config.n_coalitions = as_size();
    else if (key == "trend_threshold") config.trend_threshold = as_double();
    else if (key == "trend_min_importance") config.trend_min_importance = as_double();
    else if (key == "explain_rows") config.explain_rows = as_size();
    else if (key == "outer_folds") config.outer_folds = as_int();
    else if (key == "inner_folds") config.inner_folds = as_int();
    else if (key == "deny_list_file") config.deny_list_file = value;
    else if (key == "synth_n") config.synth_n = as_size();
    else if (key == "synth_label_noise") config.physics.label_noise = as_double();
    else if (key == "synth_t1_ms") config.physics.t1_ms = as_double();
    else if (key == "synth_rows") config.physics.rows = as_int();
    else if (key == "synth_cols") config.physics.cols = as_int();
    else if (key == "synth_noise_fraction") config.physics.noise_fraction = as_double();
    else if (key == "synth_decoy_count") config.physics.decoy_count = as_int();
    else if (key == "synth_tr_lo") config.physics.tr_ms.lo = as_double();
    else if (key == "synth_tr_hi") config.physics.tr_ms.hi = as_double();
    else if (key == "synth_te_lo") config.physics.te_ms.lo = as_double();
    else if (key == "synth_te_hi") config.physics.te_ms.hi = as_double();
    else if (key == "synth_nex_lo") config.physics.nex.lo = as_double();
    else if (key == "synth_nex_hi") config.physics.nex.hi = as_double();
    else if (key == "synth_sampling_lo") config.physics.percent_sampling.lo = as_double();
    else if (key == "synth_sampling_hi") config.physics.percent_sampling.hi = as_double();
    else if (key == "synth_pfov_lo") config.physics.percent_phase_fov.lo = as_double();
    else if (key == "synth_pfov_hi") config.physics.percent_phase_fov.hi = as_double();
    else if (key == "synth_fov_lo") config.physics.fov_mm.lo = as_double();
    else if (key == "synth_fov_hi") config.physics.fov_mm.hi = as_double();
    else if (key == "synth_thickness_lo") config.physics.slice_thickness_mm.lo = as_double();
    else if (key == "synth_thickness_hi") config.physics.slice_thickness_mm.hi = as_double();
    else if (key == "grids_file") config.grids_file = value;
    else throw BadConfig("unknown config key: " + key);
}

inline RunConfig parse_config_text(const std::string& text, RunConfig config = {}) {
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw BadConfig("config line lacks '=': " + line);
        apply_config_line(config, detail::trim(line.substr(0, eq)),
                          detail::trim(line.substr(eq + 1)));
    }
    return config;
}

} // namespace protoscope::config
