#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "protoscope/dicom.hpp"
#include "protoscope/errors.hpp"
#include "protoscope/quality.hpp"
#include "protoscope/rng.hpp"
#include "protoscope/stats.hpp"

namespace protoscope::dataset {

enum class FeatureGroup { commonly_modified, randomly_modified };
enum class Encoding { numeric, categorical_onehot };

struct FeatureSpec {
    std::string name;
    FeatureGroup group = FeatureGroup::commonly_modified;
    Encoding encoding = Encoding::numeric;
};

struct Provenance {
    std::string study_id;
    std::string series_id;
};

using Rows = std::vector<std::vector<double>>;

struct FeatureTable {
    std::vector<FeatureSpec> columns;
    Rows rows;
    std::vector<int> labels;
    std::vector<double> scores;
    std::vector<Provenance> provenance;

    std::size_t n() const { return rows.size(); }
    std::size_t d() const { return columns.size(); }

    std::vector<double> column(std::size_t j) const {
        std::vector<double> out(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) out[i] = rows[i][j];
        return out;
    }
    int column_index(const std::string& name) const {
        for (std::size_t j = 0; j < columns.size(); ++j)
            if (columns[j].name == name) return static_cast<int>(j);
        return -1;
    }
};

// ---------------------------------------------------------------------------
// Cohort grouping and slice selection

struct CohortKey {
    std::string body_part;
    dicom::Weighting weighting = dicom::Weighting::other;
    std::string coil;
    dicom::Plane plane = dicom::Plane::unknown;

    friend bool operator==(const CohortKey&, const CohortKey&) = default;
    friend bool operator<(const CohortKey& a, const CohortKey& b) {
        return std::tie(a.body_part, a.weighting, a.coil, a.plane) <
               std::tie(b.body_part, b.weighting, b.coil, b.plane);
    }
    std::string to_string() const {
        return body_part + "/" + dicom::to_string(weighting) + "/" + coil + "/" +
               dicom::to_string(plane);
    }
};

inline std::map<CohortKey, std::vector<dicom::MetaRecord>> group_series(
    const std::vector<dicom::MetaRecord>& records) {
    std::map<CohortKey, std::vector<dicom::MetaRecord>> cohorts;
    for (const auto& rec : records) {
        CohortKey key{rec.body_part, rec.weighting, rec.coil, rec.plane};
        cohorts[key].push_back(rec);
    }
    return cohorts;
}

/// Only sagittal T1/T2 cohorts feed the downstream pipeline.
inline bool cohort_eligible(const CohortKey& key) {
    return key.plane == dicom::Plane::sagittal &&
           (key.weighting == dicom::Weighting::T1 || key.weighting == dicom::Weighting::T2);
}

inline std::map<std::string, std::vector<dicom::MetaRecord>> group_by_series(
    const std::vector<dicom::MetaRecord>& records) {
    std::map<std::string, std::vector<dicom::MetaRecord>> series;
    for (const auto& rec : records) series[rec.series_id].push_back(rec);
    return series;
}

/// Median-instance slice, lower of the two middles for even counts.
inline dicom::MetaRecord select_slice(std::vector<dicom::MetaRecord> series) {
    if (series.empty()) throw Error("select_slice on empty series");
    std::stable_sort(series.begin(), series.end(),
                     [](const dicom::MetaRecord& a, const dicom::MetaRecord& b) {
                         return a.instance_number.value_or(0) < b.instance_number.value_or(0);
                     });
    return series[(series.size() - 1) / 2];
}

// ---------------------------------------------------------------------------
// Feature table assembly

struct AssembleResult {
    FeatureTable table;
    std::map<std::string, int> missing_by_column;
    int dropped_rows = 0;
};

inline std::vector<FeatureSpec> canonical_columns() {
    using FG = FeatureGroup;
    using E = Encoding;
    return {
        {"tr_ms", FG::commonly_modified, E::numeric},
        {"te_ms", FG::commonly_modified, E::numeric},
        {"nex", FG::commonly_modified, E::numeric},
        {"percent_sampling", FG::commonly_modified, E::numeric},
        {"percent_phase_fov", FG::commonly_modified, E::numeric},
        {"fov_mm", FG::commonly_modified, E::numeric},
        {"slice_thickness_mm", FG::commonly_modified, E::numeric},
        {"slice_location_mm", FG::randomly_modified, E::numeric},
        {"age_years", FG::randomly_modified, E::numeric},
        {"weight_kg", FG::randomly_modified, E::numeric},
        {"sex_F", FG::randomly_modified, E::categorical_onehot},
        {"sex_M", FG::randomly_modified, E::categorical_onehot},
    };
}

/// Build the encoded table. Sex is one-hot over (F, M); rows missing any
/// numeric feature are dropped and counted per column.
inline AssembleResult assemble_table(const std::vector<dicom::MetaRecord>& records,
                                     const std::vector<quality::QualityLabel>& labels) {
    if (records.size() != labels.size())
        throw LengthMismatch("one label required per record");
    AssembleResult result;
    result.table.columns = canonical_columns();

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        const std::optional<double> values[] = {
            rec.tr_ms,         rec.te_ms,     rec.nex,       rec.percent_sampling,
            rec.percent_phase_fov, rec.fov_mm, rec.slice_thickness_mm,
            rec.slice_location_mm, rec.age_years, rec.weight_kg,
        };
        bool missing = false;
        for (std::size_t j = 0; j < std::size(values); ++j) {
            if (!values[j]) {
                ++result.missing_by_column[result.table.columns[j].name];
                missing = true;
            }
        }
        if (missing) {
            ++result.dropped_rows;
            continue;
        }
        std::vector<double> row;
        row.reserve(result.table.columns.size());
        for (const auto& v : values) row.push_back(*v);
        row.push_back(rec.sex == dicom::Sex::F ? 1.0 : 0.0);
        row.push_back(rec.sex == dicom::Sex::M ? 1.0 : 0.0);
        result.table.rows.push_back(std::move(row));
        result.table.labels.push_back(labels[i].cls);
        result.table.scores.push_back(labels[i].score);
        result.table.provenance.push_back({rec.study_id, rec.series_id});
    }
    if (result.table.rows.empty()) throw EmptyAfterFiltering("no rows survived assembly");
    return result;
}

// ---------------------------------------------------------------------------
// Correlation-based dimensionality reduction

struct CorrelationThresholds {
    double both = 0.7;   // flagged when |pearson| and |spearman| both exceed
    double single = 0.9; // or when either alone exceeds
};

struct Removal {
    std::string removed;
    std::string kept;
    double pearson = 0.0;
    double spearman = 0.0;
};

struct ReductionResult {
    FeatureTable table;
    std::vector<Removal> log;
};

namespace detail {

inline void drop_column(FeatureTable& table, std::size_t j) {
    table.columns.erase(table.columns.begin() + static_cast<std::ptrdiff_t>(j));
    for (auto& row : table.rows) row.erase(row.begin() + static_cast<std::ptrdiff_t>(j));
}

} // namespace detail

/// Iteratively removes one column of the first flagged pair (canonical order)
/// until no numeric pair exceeds the thresholds. Within a pair the
/// commonly-modified column wins; between equals the earlier column wins.
inline ReductionResult reduce_correlated(FeatureTable table,
                                         const CorrelationThresholds& thresholds = {}) {
    if (table.n() < 3) throw Error("reduce_correlated needs at least 3 rows");
    ReductionResult result;
    for (;;) {
        std::vector<std::size_t> numeric;
        for (std::size_t j = 0; j < table.columns.size(); ++j)
            if (table.columns[j].encoding == Encoding::numeric) numeric.push_back(j);

        bool removed = false;
        for (std::size_t a = 0; a < numeric.size() && !removed; ++a) {
            for (std::size_t b = a + 1; b < numeric.size() && !removed; ++b) {
                const auto col_a = table.column(numeric[a]);
                const auto col_b = table.column(numeric[b]);
                const double p = std::abs(stats::pearson(col_a, col_b));
                const double s = std::abs(stats::spearman(col_a, col_b));
                const bool flagged = (p > thresholds.both && s > thresholds.both) ||
                                     p > thresholds.single || s > thresholds.single;
                if (!flagged) continue;
                const auto& spec_a = table.columns[numeric[a]];
                const auto& spec_b = table.columns[numeric[b]];
                std::size_t loser = numeric[b]; // default: later column drops
                if (spec_a.group == FeatureGroup::randomly_modified &&
                    spec_b.group == FeatureGroup::commonly_modified)
                    loser = numeric[a];
                const std::size_t winner = loser == numeric[a] ? numeric[b] : numeric[a];
                result.log.push_back(
                    {table.columns[loser].name, table.columns[winner].name, p, s});
                detail::drop_column(table, loser);
                removed = true;
            }
        }
        if (!removed) break;
    }
    result.table = std::move(table);
    return result;
}

// ---------------------------------------------------------------------------
// Stratified train/test split

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
};

inline SplitIndices stratified_split(const FeatureTable& table, double test_fraction,
                                     std::uint64_t seed) {
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < table.labels.size(); ++i)
        by_class[table.labels[i] == 1 ? 1 : 0].push_back(i);
    if (by_class[0].empty() || by_class[1].empty())
        throw SingleClassInput("stratified split requires both classes");

    SplitIndices split;
    split.seed = seed;
    for (int cls = 0; cls < 2; ++cls) {
        auto idx = by_class[cls];
        rng::Stream stream(seed, 0x5A17 + static_cast<std::uint64_t>(cls));
        stream.shuffle(idx);
        const auto n_test = static_cast<std::size_t>(
            std::llround(test_fraction * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_test ? split.test : split.train).push_back(idx[i]);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

inline FeatureTable subset(const FeatureTable& table, const std::vector<std::size_t>& indices) {
    FeatureTable out;
    out.columns = table.columns;
    out.rows.reserve(indices.size());
    for (const auto i : indices) {
        out.rows.push_back(table.rows[i]);
        out.labels.push_back(table.labels[i]);
        out.scores.push_back(table.scores[i]);
        if (i < table.provenance.size()) out.provenance.push_back(table.provenance[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV emission / ingestion

inline std::string to_csv(const FeatureTable& table) {
    std::string out;
    for (const auto& col : table.columns) {
        out += col.name;
        out += ',';
    }
    out += "score,label\n";
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (const auto v : table.rows[i]) {
            out += stats::format_double(v);
            out += ',';
        }
        out += stats::format_double(table.scores[i]);
        out += ',';
        out += std::to_string(table.labels[i]);
        out += '\n';
    }
    return out;
}

/// Reads a dataset CSV produced by to_csv. Column group/encoding metadata is
/// restored from the canonical schema when the name matches, otherwise the
/// column is treated as a numeric commonly-modified feature.
inline FeatureTable from_csv(const std::string& text) {
    FeatureTable table;
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        if (eol > pos) lines.push_back(text.substr(pos, eol - pos));
        pos = eol + 1;
    }
    if (lines.empty()) throw Error("empty dataset CSV");

    std::vector<std::string> header;
    pos = 0;
    const std::string& head = lines[0];
    while (pos <= head.size()) {
        std::size_t comma = head.find(',', pos);
        if (comma == std::string::npos) comma = head.size();
        header.push_back(head.substr(pos, comma - pos));
        pos = comma + 1;
    }
    if (header.size() < 3 || header[header.size() - 2] != "score" || header.back() != "label")
        throw Error("dataset CSV must end with score,label columns");

    const auto canonical = canonical_columns();
    for (std::size_t j = 0; j + 2 < header.size(); ++j) {
        FeatureSpec spec{header[j], FeatureGroup::commonly_modified, Encoding::numeric};
        for (const auto& c : canonical)
            if (c.name == header[j]) spec = c;
        table.columns.push_back(spec);
    }

    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::vector<double> values;
        pos = 0;
        const std::string& line = lines[i];
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            values.push_back(std::strtod(line.substr(pos, comma - pos).c_str(), nullptr));
            pos = comma + 1;
        }
        if (values.size() != header.size()) throw Error("dataset CSV row width mismatch");
        table.labels.push_back(static_cast<int>(values.back()));
        values.pop_back();
        table.scores.push_back(values.back());
        values.pop_back();
        table.rows.push_back(std::move(values));
    }
    return table;
}

} // namespace protoscope::dataset
