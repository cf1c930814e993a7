#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "protoscope/dataset.hpp"
#include "protoscope/dicom.hpp"
#include "protoscope/quality.hpp"
#include "protoscope/stats.hpp"
#include "protoscope/synth.hpp"

using namespace protoscope;
using namespace protoscope::synth;

namespace {

dicom::MetaRecord midpoint_record(const PhysicsConfig& config) {
    dicom::MetaRecord rec;
    rec.tr_ms = 0.5 * (config.tr_ms.lo + config.tr_ms.hi);
    rec.nex = 0.5 * (config.nex.lo + config.nex.hi);
    rec.percent_sampling = 0.5 * (config.percent_sampling.lo + config.percent_sampling.hi);
    rec.percent_phase_fov = 0.5 * (config.percent_phase_fov.lo + config.percent_phase_fov.hi);
    rec.fov_mm = 0.5 * (config.fov_mm.lo + config.fov_mm.hi);
    rec.slice_thickness_mm =
        0.5 * (config.slice_thickness_mm.lo + config.slice_thickness_mm.hi);
    rec.rows = config.rows;
    rec.cols = config.cols;
    return rec;
}

} // namespace

TEST_CASE("snr_model scaling laws", "[synth]") {
    PhysicsConfig config;
    auto rec = midpoint_record(config);
    const double base = snr_model(rec, config);

    // doubling NEX multiplies SNR by sqrt(2) exactly
    auto doubled = rec;
    doubled.nex = *rec.nex * 2.0;
    config.nex.hi = *doubled.nex; // keep in range
    CHECK(snr_model(doubled, config) == Catch::Approx(base * std::sqrt(2.0)).epsilon(1e-12));

    // halving FOV scales voxel area by 0.25, dominating the SNR
    auto half_fov = rec;
    half_fov.fov_mm = *rec.fov_mm / 2.0;
    PhysicsConfig wide = config;
    wide.fov_mm.lo = *half_fov.fov_mm;
    CHECK(snr_model(half_fov, wide) == Catch::Approx(base * 0.25).epsilon(1e-12));

    // TR factor saturates at 1 and is monotone
    PhysicsConfig long_tr = config;
    long_tr.tr_ms.hi = 1e9;
    auto tr_max = rec;
    tr_max.tr_ms = 1e9;
    const double saturated = snr_model(tr_max, long_tr);
    auto tr_mid = rec;
    tr_mid.tr_ms = *rec.tr_ms * 2.0;
    CHECK(snr_model(tr_mid, long_tr) > base);
    CHECK(snr_model(tr_mid, long_tr) < saturated);
    const double tr_factor_limit =
        saturated / (base / (1.0 - std::exp(-*rec.tr_ms / config.t1_ms)));
    CHECK(tr_factor_limit == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("snr_model is monotone in every planted parameter", "[synth]") {
    const PhysicsConfig config;
    const auto probe = [&](auto mutate) {
        auto rec = midpoint_record(config);
        double last = -1.0;
        for (int step = 0; step <= 10; ++step) {
            mutate(rec, step / 10.0);
            const double snr = snr_model(rec, config);
            CHECK(snr > last);
            last = snr;
        }
    };
    probe([&](dicom::MetaRecord& r, double t) {
        r.tr_ms = config.tr_ms.lo + t * (config.tr_ms.hi - config.tr_ms.lo);
    });
    probe([&](dicom::MetaRecord& r, double t) {
        r.nex = config.nex.lo + t * (config.nex.hi - config.nex.lo);
    });
    probe([&](dicom::MetaRecord& r, double t) {
        r.percent_sampling =
            config.percent_sampling.lo + t * (config.percent_sampling.hi - config.percent_sampling.lo);
    });
    probe([&](dicom::MetaRecord& r, double t) {
        r.percent_phase_fov =
            config.percent_phase_fov.lo + t * (config.percent_phase_fov.hi - config.percent_phase_fov.lo);
    });
    probe([&](dicom::MetaRecord& r, double t) {
        r.fov_mm = config.fov_mm.lo + t * (config.fov_mm.hi - config.fov_mm.lo);
    });
    probe([&](dicom::MetaRecord& r, double t) {
        r.slice_thickness_mm =
            config.slice_thickness_mm.lo +
            t * (config.slice_thickness_mm.hi - config.slice_thickness_mm.lo);
    });
}

TEST_CASE("snr_model rejects out-of-range and missing fields", "[synth]") {
    const PhysicsConfig config;
    auto rec = midpoint_record(config);
    rec.tr_ms = config.tr_ms.hi * 10.0;
    CHECK_THROWS_AS(snr_model(rec, config), OutOfRange);
    rec.tr_ms.reset();
    CHECK_THROWS_AS(snr_model(rec, config), OutOfRange);
}

TEST_CASE("gen_cohort is deterministic and validates inputs", "[synth]") {
    PhysicsConfig config;
    config.rows = config.cols = 32;
    const auto a = gen_cohort(60, 5, config);
    const auto b = gen_cohort(60, 5, config);
    REQUIRE(a.records.size() == 60);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].tr_ms == b.records[i].tr_ms);
        CHECK(a.slabs[i].samples == b.slabs[i].samples);
    }
    CHECK_THROWS_AS(gen_cohort(10, 5, config), BadConfig);
    PhysicsConfig bad = config;
    bad.label_noise = 0.7;
    CHECK_THROWS_AS(gen_cohort(60, 5, bad), BadConfig);
}

TEST_CASE("higher SNR produces cleaner images by both quality metrics", "[synth]") {
    PhysicsConfig config;
    config.rows = config.cols = 48;
    const auto cohort = gen_cohort(80, 9, config);
    // correlate SNR with the combined badness score
    std::vector<quality::QualityMetrics> metrics(cohort.slabs.size());
    for (std::size_t i = 0; i < cohort.slabs.size(); ++i)
        metrics[i] = quality::compute_metrics(cohort.slabs[i]);
    const auto labels = quality::combine_and_label(metrics);
    std::vector<double> snr, score;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        snr.push_back(cohort.snr[i]);
        score.push_back(labels[i].score);
    }
    CHECK(stats::spearman(snr, score) < -0.8); // badness falls as SNR rises
}

TEST_CASE("label noise mirrors the requested fraction of records", "[synth]") {
    PhysicsConfig config;
    config.rows = config.cols = 32;
    config.label_noise = 0.1;
    const auto cohort = gen_cohort(100, 11, config);
    int flipped = 0;
    for (const bool f : cohort.flipped) flipped += f ? 1 : 0;
    CHECK(flipped == 10);
}

TEST_CASE("decoy features have no label association", "[synth]") {
    PhysicsConfig config;
    config.rows = config.cols = 32;
    const auto cohort = gen_cohort(400, 13, config);
    std::vector<quality::QualityMetrics> metrics(cohort.slabs.size());
    for (std::size_t i = 0; i < cohort.slabs.size(); ++i)
        metrics[i] = quality::compute_metrics(cohort.slabs[i]);
    const auto labels = quality::combine_and_label(metrics);
    std::vector<double> label_values, age, weight, slice_loc;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        label_values.push_back(labels[i].cls);
        age.push_back(*cohort.records[i].age_years);
        weight.push_back(*cohort.records[i].weight_kg);
        slice_loc.push_back(*cohort.records[i].slice_location_mm);
    }
    CHECK(std::abs(stats::spearman(age, label_values)) <= 0.15);
    CHECK(std::abs(stats::spearman(weight, label_values)) <= 0.15);
    CHECK(std::abs(stats::spearman(slice_loc, label_values)) <= 0.15);
}

TEST_CASE("cohorts survive the DICOM round trip bit-exactly", "[synth]") {
    PhysicsConfig config;
    config.rows = config.cols = 24;
    const auto cohort = gen_cohort(50, 17, config);
    for (std::size_t i = 0; i < 10; ++i) {
        const auto bytes = dicom::write_file(cohort.records[i], cohort.slabs[i]);
        const auto elements = dicom::parse_file(bytes);
        const auto rec = dicom::extract_record(elements);
        const auto slab = dicom::extract_pixels(elements);
        CHECK(rec.tr_ms == cohort.records[i].tr_ms);
        CHECK(rec.nex == cohort.records[i].nex);
        CHECK(rec.fov_mm == cohort.records[i].fov_mm);
        CHECK(rec.percent_phase_fov == cohort.records[i].percent_phase_fov);
        CHECK(rec.slice_thickness_mm == cohort.records[i].slice_thickness_mm);
        CHECK(rec.age_years == cohort.records[i].age_years);
        CHECK(slab.samples == cohort.slabs[i].samples);
    }
}

TEST_CASE("check_recovery counts two-model agreement", "[synth]") {
    GroundTruth truth;
    truth.directions = {{"a", shap::Direction::direct},
                        {"b", shap::Direction::inverse},
                        {"c", shap::Direction::none}};
    shap::TrendSummary summary;
    summary.models = {"m1", "m2", "m3"};
    const auto cell = [](const char* m, const char* f, shap::Direction d) {
        shap::TrendCell c;
        c.model = m;
        c.feature = f;
        c.rank = 1;
        c.direction = d;
        return c;
    };
    // "a" recovered by two models; "b" by only one
    summary.cells = {cell("m1", "a", shap::Direction::direct),
                     cell("m2", "a", shap::Direction::direct),
                     cell("m1", "b", shap::Direction::inverse),
                     cell("m2", "b", shap::Direction::none)};
    CHECK(check_recovery(summary, truth) == Catch::Approx(0.5));

    shap::TrendSummary empty;
    CHECK(check_recovery(empty, truth) == 0.0);
    summary.cells.push_back(cell("m3", "b", shap::Direction::inverse));
    CHECK(check_recovery(summary, truth) == Catch::Approx(1.0));
}
