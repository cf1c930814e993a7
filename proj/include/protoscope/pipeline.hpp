#pragma once

// The five CLI commands as library functions: ingest, build, train, explain,
// synth. Each command is rerun-deterministic given identical config and
// inputs; per-file problems are logged warnings, not fatal errors.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoscope/config.hpp"
#include "protoscope/dataset.hpp"
#include "protoscope/dicom.hpp"
#include "protoscope/metrics.hpp"
#include "protoscope/nested_cv.hpp"
#include "protoscope/quality.hpp"
#include "protoscope/shap.hpp"
#include "protoscope/svg.hpp"
#include "protoscope/synth.hpp"

namespace protoscope::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunReport {
    int exit_code = 0;
    int warnings = 0;
    std::vector<std::string> messages;

    void warn(const std::string& msg) {
        ++warnings;
        messages.push_back(msg);
    }
};

// ---------------------------------------------------------------------------
// File helpers

inline std::vector<std::uint8_t> read_binary_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

inline void write_binary_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

/// Recursively lists *.dcm files (case-insensitive), sorted by path.
inline std::vector<fs::path> list_dicom_files(const fs::path& dir) {
    std::vector<fs::path> files;
    if (!fs::exists(dir)) return files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        for (auto& c : ext) c = static_cast<char>(std::tolower(c));
        if (ext == ".dcm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

inline std::vector<dicom::ScrubRule> load_deny_list(const config::RunConfig& config) {
    if (config.deny_list_file.empty()) return dicom::default_deny_list();
    return dicom::parse_deny_list(read_text_file(config.deny_list_file));
}

inline void load_grid_override(config::RunConfig& config) {
    if (config.grids_file.empty()) return;
    config.grids = config::grids_from_json(json::parse(read_text_file(config.grids_file)));
}

// ---------------------------------------------------------------------------
// ingest

inline std::string metadata_csv_header() {
    return "path,study_id,series_id,instance_number,protocol_name,body_part,coil,plane,"
           "weighting,tr_ms,te_ms,nex,percent_sampling,percent_phase_fov,fov_mm,"
           "slice_thickness_mm,slice_location_mm,rows,cols,age_years,weight_kg,sex\n";
}

inline std::string metadata_csv_row(const std::string& path, const dicom::MetaRecord& rec) {
    const auto opt = [](const std::optional<double>& v) {
        return v ? stats::format_double(*v) : std::string();
    };
    const auto opt_int = [](const std::optional<int>& v) {
        return v ? std::to_string(*v) : std::string();
    };
    std::string out = path;
    for (const std::string& s :
         {rec.study_id, rec.series_id, opt_int(rec.instance_number), rec.protocol_name,
          rec.body_part, rec.coil, std::string(dicom::to_string(rec.plane)),
          std::string(dicom::to_string(rec.weighting)), opt(rec.tr_ms), opt(rec.te_ms),
          opt(rec.nex), opt(rec.percent_sampling), opt(rec.percent_phase_fov), opt(rec.fov_mm),
          opt(rec.slice_thickness_mm), opt(rec.slice_location_mm), opt_int(rec.rows),
          opt_int(rec.cols), opt(rec.age_years), opt(rec.weight_kg),
          std::string(dicom::to_string(rec.sex))}) {
        out += ',';
        out += s;
    }
    out += '\n';
    return out;
}

/// Parse + scrub + extract over a directory tree. Emits metadata.csv and,
/// when requested, scrubbed copies of every readable file.
inline RunReport cmd_ingest(const config::RunConfig& config, bool write_scrubbed = false) {
    RunReport report;
    const auto files = list_dicom_files(config.input_dir);
    const auto deny = load_deny_list(config);
    std::string csv = metadata_csv_header();
    int rows = 0;
    if (files.empty()) report.warn("no .dcm files under " + config.input_dir);
    for (const auto& path : files) {
        try {
            const auto elements = dicom::parse_file(read_binary_file(path));
            const auto scrubbed = dicom::scrub_phi(elements, deny);
            csv += metadata_csv_row(path.filename().string(), dicom::extract_record(scrubbed));
            ++rows;
            if (write_scrubbed)
                write_binary_file(fs::path(config.out_dir) / "scrubbed" / path.filename(),
                                  dicom::serialize_elements(scrubbed));
        } catch (const Error& e) {
            report.warn(path.filename().string() + ": " + e.what());
        }
    }
    write_text_file(fs::path(config.out_dir) / "metadata.csv", csv);
    json manifest;
    manifest["format_version"] = 1;
    manifest["command"] = "ingest";
    manifest["files_seen"] = files.size();
    manifest["rows"] = rows;
    manifest["warning_count"] = report.warnings;
    manifest["warnings"] = report.messages;
    write_text_file(fs::path(config.out_dir) / "ingest_manifest.json", manifest.dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// build

struct BuildArtifacts {
    dataset::CohortKey cohort;
    dataset::FeatureTable table; // reduced
    std::vector<dataset::FeatureSpec> all_columns;
    std::vector<dataset::Removal> removal_log;
    std::map<std::string, int> missing_by_column;
    int dropped_rows = 0;
    dataset::SplitIndices split;
    bool small_cohort_warning = false;
};

/// Shared by cmd_build and the test harness: records and slabs are aligned,
/// one slab per record.
inline BuildArtifacts build_dataset(const std::vector<dicom::MetaRecord>& records,
                                    const std::vector<dicom::PixelSlab>& slabs,
                                    const config::RunConfig& config) {
    if (records.size() != slabs.size()) throw LengthMismatch("one pixel slab per record");
    const auto seed = config.require_seed();

    // cohort selection: explicit filter, or the largest eligible cohort
    std::map<dataset::CohortKey, std::vector<std::size_t>> cohorts;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        cohorts[{r.body_part, r.weighting, r.coil, r.plane}].push_back(i);
    }
    const dataset::CohortKey* chosen = nullptr;
    for (const auto& [key, members] : cohorts) {
        if (!dataset::cohort_eligible(key)) continue;
        if (!config.cohort_filter.empty()) {
            if (key.to_string() == config.cohort_filter) chosen = &key;
        } else if (!chosen || members.size() > cohorts.at(*chosen).size()) {
            chosen = &key;
        }
    }
    if (!chosen) throw EmptyAfterFiltering("no eligible sagittal T1/T2 cohort found");

    // one slice per series (median instance number)
    const auto& member_indices = cohorts.at(*chosen);
    std::map<std::string, std::vector<std::size_t>> series;
    for (const auto i : member_indices) series[records[i].series_id].push_back(i);
    std::vector<std::size_t> selected;
    for (auto& [sid, members] : series) {
        std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            return records[a].instance_number.value_or(0) <
                   records[b].instance_number.value_or(0);
        });
        selected.push_back(members[(members.size() - 1) / 2]);
    }

    std::vector<dicom::MetaRecord> cohort_records;
    std::vector<quality::QualityMetrics> metrics(selected.size());
    for (const auto i : selected) cohort_records.push_back(records[i]);
    parallel_for(selected.size(), [&](std::size_t k) {
        metrics[k] = quality::compute_metrics(slabs[selected[k]]);
    });
    const auto labels = quality::combine_and_label(metrics);

    const auto assembled = dataset::assemble_table(cohort_records, labels);
    auto reduction = dataset::reduce_correlated(assembled.table, config.correlation);

    BuildArtifacts artifacts;
    artifacts.cohort = *chosen;
    artifacts.all_columns = assembled.table.columns;
    artifacts.missing_by_column = assembled.missing_by_column;
    artifacts.dropped_rows = assembled.dropped_rows;
    artifacts.removal_log = std::move(reduction.log);
    artifacts.table = std::move(reduction.table);
    artifacts.split = dataset::stratified_split(artifacts.table, config.test_fraction, seed);
    artifacts.small_cohort_warning =
        artifacts.table.n() < static_cast<std::size_t>(config.min_cohort_rows);
    return artifacts;
}

inline json build_manifest_json(const BuildArtifacts& artifacts,
                                const config::RunConfig& config, const RunReport& report) {
    json manifest;
    manifest["format_version"] = 1;
    manifest["command"] = "build";
    manifest["seed"] = *config.seed;
    manifest["cohort_key"] = artifacts.cohort.to_string();
    manifest["rows"] = artifacts.table.n();
    manifest["dropped_rows"] = artifacts.dropped_rows;
    manifest["missing_by_column"] = artifacts.missing_by_column;
    json removals = json::array();
    for (const auto& r : artifacts.removal_log)
        removals.push_back({{"removed", r.removed},
                            {"kept", r.kept},
                            {"pearson", r.pearson},
                            {"spearman", r.spearman}});
    manifest["removal_log"] = std::move(removals);
    json all_columns = json::array();
    for (const auto& c : artifacts.all_columns) all_columns.push_back(c.name);
    manifest["all_columns"] = std::move(all_columns);
    json kept_columns = json::array();
    for (const auto& c : artifacts.table.columns) kept_columns.push_back(c.name);
    manifest["columns"] = std::move(kept_columns);
    manifest["split"] = {{"test_fraction", config.test_fraction},
                         {"train", artifacts.split.train},
                         {"test", artifacts.split.test}};
    manifest["min_cohort_rows"] = config.min_cohort_rows;
    manifest["small_cohort_warning"] = artifacts.small_cohort_warning;
    manifest["warning_count"] = report.warnings + (artifacts.small_cohort_warning ? 1 : 0);
    manifest["warnings"] = report.messages;
    return manifest;
}

/// Grouping, slice selection, metrics, labeling, reduction and split over a
/// DICOM tree; emits dataset.csv and manifest.json.
inline RunReport cmd_build(const config::RunConfig& config) {
    RunReport report;
    const auto files = list_dicom_files(config.input_dir);
    const auto deny = load_deny_list(config);
    std::vector<dicom::MetaRecord> records;
    std::vector<dicom::PixelSlab> slabs;
    for (const auto& path : files) {
        try {
            const auto elements = dicom::scrub_phi(dicom::parse_file(read_binary_file(path)), deny);
            auto record = dicom::extract_record(elements);
            auto slab = dicom::extract_pixels(elements);
            records.push_back(std::move(record));
            slabs.push_back(std::move(slab));
        } catch (const Error& e) {
            report.warn(path.filename().string() + ": " + e.what());
        }
    }
    const auto artifacts = build_dataset(records, slabs, config);
    if (artifacts.small_cohort_warning)
        report.messages.push_back("cohort has fewer than " +
                                  std::to_string(config.min_cohort_rows) + " rows");
    write_text_file(fs::path(config.out_dir) / "dataset.csv", dataset::to_csv(artifacts.table));
    write_text_file(fs::path(config.out_dir) / "manifest.json",
                    build_manifest_json(artifacts, config, report).dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// train

struct TrainedModel {
    learners::FittedModel model;
    eval::CVResult cv;
    eval::FinalSelection selection;
    metrics::MetricSet holdout;
};

struct TrainArtifacts {
    std::map<std::string, TrainedModel> models; // by kind name, canonical order
};

inline json metric_set_json(const metrics::MetricSet& m) {
    return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall},
            {"f1", m.f1},            {"auc_roc", m.auc_roc},     {"auc_pr", m.auc_pr}};
}

/// Nested CV + final selection + holdout for all five kinds on the train part.
inline TrainArtifacts train_models(const dataset::FeatureTable& table,
                                   const dataset::SplitIndices& split,
                                   const config::RunConfig& config) {
    const auto seed = config.require_seed();
    const auto train = dataset::subset(table, split.train);
    const auto test = dataset::subset(table, split.test);

    TrainArtifacts artifacts;
    for (const auto kind : learners::kAllKinds) {
        const auto grid = config.grid_for(kind);
        const auto kind_seed = rng::derive(seed, 0x7D0 + static_cast<std::uint64_t>(kind));
        TrainedModel tm;
        tm.cv = eval::nested_cv(kind, grid, train.rows, train.labels, config.outer_folds,
                                config.inner_folds, kind_seed);
        tm.selection = eval::select_final(tm.cv);
        tm.model = learners::fit(kind, tm.selection.chosen, train.rows, train.labels, kind_seed);
        tm.holdout = eval::evaluate_holdout(tm.model, test.rows, test.labels);
        artifacts.models.emplace(learners::kind_name(kind), std::move(tm));
    }
    return artifacts;
}

inline json evaluation_json(const TrainArtifacts& artifacts, const config::RunConfig& config) {
    json out;
    out["format_version"] = 1;
    out["command"] = "train";
    out["seed"] = *config.seed;
    json models;
    for (const auto kind : learners::kAllKinds) {
        const auto& tm = artifacts.models.at(learners::kind_name(kind));
        json per_fold = json::array();
        for (const auto& fold : tm.cv.folds) {
            json params;
            for (const auto& [k, v] : fold.chosen.values) params[k] = v;
            per_fold.push_back(
                {{"metrics", metric_set_json(fold.metrics)}, {"chosen_params", params}});
        }
        json mean_std;
        for (const auto& [name, ms] : tm.cv.summary)
            mean_std[name] = {{"mean", ms.mean},
                              {"std", ms.std},
                              {"display", metrics::mean_std_string(ms.mean, ms.std)}};
        json final_params;
        for (const auto& [k, v] : tm.selection.chosen.values) final_params[k] = v;
        models[learners::kind_name(kind)] = {
            {"ncv", {{"per_fold", per_fold}, {"mean_std", mean_std}}},
            {"final_params", final_params},
            {"selection_rationale", tm.selection.rationale ==
                                            eval::SelectionRationale::modal_config
                                        ? "modal_config"
                                        : "best_mean_inner_f1"},
            {"holdout", metric_set_json(tm.holdout)}};
    }
    out["models"] = std::move(models);
    return out;
}

/// Reads dataset.csv + manifest.json, trains all five kinds, writes
/// evaluation.json and one model artifact per kind.
inline RunReport cmd_train(config::RunConfig config) {
    RunReport report;
    load_grid_override(config);
    const fs::path out_dir(config.out_dir);
    const auto table = dataset::from_csv(read_text_file(out_dir / "dataset.csv"));
    const auto manifest = json::parse(read_text_file(out_dir / "manifest.json"));
    dataset::SplitIndices split;
    split.seed = manifest.at("seed").get<std::uint64_t>();
    split.train = manifest.at("split").at("train").get<std::vector<std::size_t>>();
    split.test = manifest.at("split").at("test").get<std::vector<std::size_t>>();
    if (!config.seed) config.seed = split.seed;

    const auto artifacts = train_models(table, split, config);
    write_text_file(out_dir / "evaluation.json",
                    evaluation_json(artifacts, config).dump(2) + "\n");
    for (const auto& [name, tm] : artifacts.models)
        write_text_file(out_dir / "models" / (name + ".json"),
                        learners::to_json(tm.model).dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// explain

struct ExplainArtifacts {
    std::vector<std::string> feature_universe;
    std::map<std::string, shap::Attribution> attributions; // by kind name
    std::map<std::string, shap::ImportanceRanking> rankings;
    std::map<std::string, std::map<std::string, shap::Direction>> trends;
    shap::TrendSummary summary;
};

inline ExplainArtifacts explain_models(
    const dataset::FeatureTable& table, const dataset::SplitIndices& split,
    const std::map<std::string, learners::FittedModel>& models,
    const std::map<std::string, double>& holdout_f1,
    const std::vector<std::string>& feature_universe, const config::RunConfig& config) {
    const auto seed = config.require_seed();
    const auto train = dataset::subset(table, split.train);
    auto test = dataset::subset(table, split.test);
    if (test.rows.size() > config.explain_rows) {
        test.rows.resize(config.explain_rows);
        test.labels.resize(config.explain_rows);
        test.scores.resize(config.explain_rows);
    }

    std::vector<std::string> names;
    for (const auto& c : table.columns) names.push_back(c.name);
    const auto background =
        shap::background_sample(train.rows, config.background_size, rng::derive(seed, 0xB6));

    shap::ExplainSettings settings;
    settings.background_size = config.background_size;
    settings.n_coalitions = config.n_coalitions;
    settings.trend_threshold = config.trend_threshold;
    settings.seed = rng::derive(seed, 0xE9);

    ExplainArtifacts artifacts;
    artifacts.feature_universe = feature_universe;
    std::vector<shap::ModelExplanation> explanations;
    for (const auto kind : learners::kAllKinds) {
        const std::string name = learners::kind_name(kind);
        const auto it = models.find(name);
        if (it == models.end()) continue;
        auto attribution =
            shap::explain_dataset(it->second, names, test.rows, background, settings);
        auto ranking = shap::rank_importance(attribution);
        auto trends = shap::trend_direction(attribution, test.rows, config.trend_threshold,
                                            config.trend_min_importance);

        shap::ModelExplanation exp;
        exp.model = name;
        exp.holdout_f1 = holdout_f1.count(name) ? holdout_f1.at(name) : 0.0;
        exp.ranking = ranking;
        exp.trends = trends;
        explanations.push_back(exp);

        artifacts.attributions.emplace(name, std::move(attribution));
        artifacts.rankings.emplace(name, std::move(ranking));
        artifacts.trends.emplace(name, std::move(trends));
    }
    artifacts.summary = shap::weighted_cross_model_summary(explanations, feature_universe);
    return artifacts;
}

inline std::string attribution_csv(const shap::Attribution& attribution) {
    std::string out = "row";
    for (const auto& name : attribution.feature_names) out += "," + name;
    out += ",base\n";
    for (std::size_t i = 0; i < attribution.phi.size(); ++i) {
        out += std::to_string(i);
        for (const double phi : attribution.phi[i]) out += "," + stats::format_double(phi);
        out += "," + stats::format_double(attribution.base_value);
        out += '\n';
    }
    return out;
}

inline json summary_json(const ExplainArtifacts& artifacts, const config::RunConfig& config) {
    json out;
    out["format_version"] = 1;
    out["command"] = "explain";
    out["seed"] = *config.seed;
    out["trend_threshold"] = config.trend_threshold;
    out["trend_rule"] = "spearman(feature, phi) with +-threshold cutoffs";
    out["models"] = artifacts.summary.models;
    out["feature_universe"] = artifacts.summary.feature_universe;
    json cells = json::array();
    for (const auto& cell : artifacts.summary.cells)
        cells.push_back({{"model", cell.model},
                         {"feature", cell.feature},
                         {"rank", cell.rank},
                         {"impact_weight", cell.impact_weight},
                         {"direction", shap::to_string(cell.direction)}});
    out["cells"] = std::move(cells);
    return out;
}

/// Attributions + summary JSON + figures for every trained model.
inline RunReport cmd_explain(config::RunConfig config) {
    RunReport report;
    const fs::path out_dir(config.out_dir);
    const auto table = dataset::from_csv(read_text_file(out_dir / "dataset.csv"));
    const auto manifest = json::parse(read_text_file(out_dir / "manifest.json"));
    dataset::SplitIndices split;
    split.seed = manifest.at("seed").get<std::uint64_t>();
    split.train = manifest.at("split").at("train").get<std::vector<std::size_t>>();
    split.test = manifest.at("split").at("test").get<std::vector<std::size_t>>();
    if (!config.seed) config.seed = split.seed;
    const auto feature_universe =
        manifest.at("all_columns").get<std::vector<std::string>>();

    const auto evaluation = json::parse(read_text_file(out_dir / "evaluation.json"));
    std::map<std::string, learners::FittedModel> models;
    std::map<std::string, double> holdout_f1;
    for (const auto kind : learners::kAllKinds) {
        const std::string name = learners::kind_name(kind);
        models.emplace(name,
                       learners::from_json(json::parse(
                           read_text_file(out_dir / "models" / (name + ".json")))));
        holdout_f1[name] =
            evaluation.at("models").at(name).at("holdout").at("f1").get<double>();
    }

    const auto artifacts =
        explain_models(table, split, models, holdout_f1, feature_universe, config);

    auto test = dataset::subset(table, split.test);
    if (test.rows.size() > config.explain_rows) test.rows.resize(config.explain_rows);
    for (const auto& [name, attribution] : artifacts.attributions) {
        write_text_file(out_dir / "attributions" / (name + ".csv"),
                        attribution_csv(attribution));
        write_text_file(out_dir / "figures" / ("beeswarm_" + name + ".svg"),
                        svg::beeswarm_svg(attribution, test.rows, name + " SHAP beeswarm",
                                          *config.seed));
    }
    write_text_file(out_dir / "figures" / "top5.svg",
                    svg::top5_bar_svg(artifacts.summary, "Top five features by model"));
    write_text_file(out_dir / "figures" / "bubble.svg",
                    svg::bubble_svg(artifacts.summary, "Parameter trends across models"));
    write_text_file(out_dir / "summary.json", summary_json(artifacts, config).dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// synth

/// Generates the synthetic cohort and writes it as a DICOM fixture tree plus
/// a ground-truth manifest.
inline RunReport cmd_synth(const config::RunConfig& config) {
    RunReport report;
    const auto seed = config.require_seed();
    const auto cohort = synth::gen_cohort(config.synth_n, seed, config.physics);
    const fs::path out_dir(config.out_dir);
    char name[32];
    for (std::size_t i = 0; i < cohort.records.size(); ++i) {
        std::snprintf(name, sizeof(name), "%05zu.dcm", i);
        write_binary_file(out_dir / "dicom" / name,
                          dicom::write_file(cohort.records[i], cohort.slabs[i]));
    }
    json truth;
    truth["format_version"] = 1;
    truth["command"] = "synth";
    truth["seed"] = seed;
    truth["n"] = cohort.records.size();
    truth["label_noise"] = config.physics.label_noise;
    std::size_t flipped = 0;
    for (const bool f : cohort.flipped) flipped += f ? 1 : 0;
    truth["flipped_count"] = flipped;
    json directions;
    for (const auto& [feature, direction] : cohort.truth.directions)
        directions[feature] = shap::to_string(direction);
    truth["directions"] = std::move(directions);
    write_text_file(out_dir / "ground_truth.json", truth.dump(2) + "\n");
    return report;
}

} // namespace protoscope::pipeline
