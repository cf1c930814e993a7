#pragma once

// Synthetic cohort generator grounded in the SNR relations of spin-echo MRI:
// SNR grows with voxel volume, the square root of averaged phase-encoding
// samples, and a TR saturation factor 1 - exp(-TR/T1). Image quality is
// driven through the pixels (noise amplitude proportional to 1/SNR), so the
// full ingest -> metrics -> label path is exercised, and the planted
// parameter directions are known ground truth.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "protoscope/dicom.hpp"
#include "protoscope/errors.hpp"
#include "protoscope/rng.hpp"
#include "protoscope/shap.hpp"
#include "protoscope/stats.hpp"

namespace protoscope::synth {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return v >= lo && v <= hi; }
};

struct PhysicsConfig {
    double t1_ms = 600.0;   // tissue T1 for the TR saturation factor
    double snr_scale = 1.0;
    double label_noise = 0.0; // fraction of labels mirror-flipped, in [0, 0.5)
    Range tr_ms{250.0, 900.0};
    Range te_ms{8.0, 30.0}; // decoy: no SNR influence in this model
    Range nex{1.0, 4.0};
    Range percent_sampling{60.0, 100.0};
    Range percent_phase_fov{60.0, 100.0};
    Range fov_mm{200.0, 400.0};
    Range slice_thickness_mm{3.0, 6.0};
    // console-style step sizes; acquisition parameters come in discrete levels
    double tr_step = 25.0;
    double nex_step = 0.5;
    double sampling_step = 5.0;
    double pfov_step = 5.0;
    double fov_step = 10.0;
    double thickness_step = 0.5;
    Range slice_location_mm{-60.0, 60.0};
    Range age_years{18.0, 90.0};
    Range weight_kg{45.0, 120.0};
    int rows = 64;
    int cols = 64;
    int bits_stored = 12;
    int decoy_count = 4;     // randomized patient covariates (slice_loc, age, weight, sex)
    double noise_fraction = 0.18; // noise sigma at reference SNR, as a fraction of amplitude
};

/// Planted per-feature trend directions; decoys are none.
struct GroundTruth {
    std::map<std::string, shap::Direction> directions;
};

inline void validate_config(const PhysicsConfig& config) {
    const Range* ranges[] = {&config.tr_ms,         &config.te_ms,
                             &config.nex,           &config.percent_sampling,
                             &config.percent_phase_fov, &config.fov_mm,
                             &config.slice_thickness_mm};
    for (const auto* r : ranges)
        if (!(r->lo > 0.0) || r->hi < r->lo) throw BadConfig("parameter range must be positive");
    if (config.label_noise < 0.0 || config.label_noise >= 0.5)
        throw BadConfig("label_noise must lie in [0, 0.5)");
    if (config.rows < 8 || config.cols < 8) throw BadConfig("image dimensions too small");
}

/// Relative SNR of one acquisition.
inline double snr_model(const dicom::MetaRecord& rec, const PhysicsConfig& config) {
    const struct {
        const char* name;
        const std::optional<double>& value;
        const Range& range;
    } fields[] = {
        {"tr_ms", rec.tr_ms, config.tr_ms},
        {"nex", rec.nex, config.nex},
        {"percent_sampling", rec.percent_sampling, config.percent_sampling},
        {"percent_phase_fov", rec.percent_phase_fov, config.percent_phase_fov},
        {"fov_mm", rec.fov_mm, config.fov_mm},
        {"slice_thickness_mm", rec.slice_thickness_mm, config.slice_thickness_mm},
    };
    for (const auto& f : fields) {
        if (!f.value) throw OutOfRange(std::string(f.name) + " missing");
        if (!f.range.contains(*f.value))
            throw OutOfRange(std::string(f.name) + " = " + stats::format_double(*f.value) +
                             " outside configured range");
    }
    const double rows = static_cast<double>(rec.rows.value_or(config.rows));
    const double cols = static_cast<double>(rec.cols.value_or(config.cols));
    const double pfov = *rec.percent_phase_fov / 100.0;
    const double voxel_volume =
        (*rec.fov_mm / cols) * (*rec.fov_mm * pfov / rows) * *rec.slice_thickness_mm;
    const double phase_steps = rows * pfov;
    const double averaged_samples = *rec.nex * phase_steps * (*rec.percent_sampling / 100.0);
    const double tr_factor = 1.0 - std::exp(-*rec.tr_ms / config.t1_ms);
    return config.snr_scale * voxel_volume * std::sqrt(averaged_samples) * tr_factor;
}

struct SynthCohort {
    std::vector<dicom::MetaRecord> records;
    std::vector<dicom::PixelSlab> slabs;
    GroundTruth truth;
    std::vector<double> snr;      // effective (post label-noise) relative SNR
    std::vector<bool> flipped;    // which records had their quality mirrored
};

namespace detail {

/// Round through a fixed decimal string so the value's shortest round-trip
/// representation stays within the 16-byte DS limit.
inline double quantize(double v, double step) {
    const int decimals = step >= 0.1 ? 1 : step >= 0.01 ? 2 : 4;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return std::strtod(buf, nullptr);
}

/// Snap a sampled value onto the console's step grid, staying inside [lo, hi].
inline double snap(double v, double step, const Range& range) {
    if (step <= 0.0) return quantize(v, 0.01);
    const double snapped = range.lo + std::round((v - range.lo) / step) * step;
    return quantize(std::clamp(snapped, range.lo, range.hi), step >= 1.0 ? 1.0 : 0.1);
}

/// SNR at the midpoint of every range; normalizes the noise scale.
inline double reference_snr(const PhysicsConfig& config) {
    dicom::MetaRecord mid;
    mid.tr_ms = 0.5 * (config.tr_ms.lo + config.tr_ms.hi);
    mid.nex = 0.5 * (config.nex.lo + config.nex.hi);
    mid.percent_sampling = 0.5 * (config.percent_sampling.lo + config.percent_sampling.hi);
    mid.percent_phase_fov = 0.5 * (config.percent_phase_fov.lo + config.percent_phase_fov.hi);
    mid.fov_mm = 0.5 * (config.fov_mm.lo + config.fov_mm.hi);
    mid.slice_thickness_mm =
        0.5 * (config.slice_thickness_mm.lo + config.slice_thickness_mm.hi);
    mid.rows = config.rows;
    mid.cols = config.cols;
    return snr_model(mid, config);
}

/// Smooth anatomy-like pattern: low-frequency bands plus a centered blob.
inline double structure_at(std::size_t r, std::size_t c, std::size_t rows, std::size_t cols) {
    const double pi = 3.141592653589793;
    const double u = static_cast<double>(r) / static_cast<double>(rows);
    const double v = static_cast<double>(c) / static_cast<double>(cols);
    const double bands = std::sin(2.0 * pi * 2.0 * u) * std::cos(2.0 * pi * 1.5 * v);
    const double du = u - 0.5, dv = v - 0.5;
    const double blob = std::exp(-(du * du + dv * dv) / 0.04);
    return 0.55 * bands + 0.9 * blob;
}

} // namespace detail

/// Generate a cohort. Parameters are sampled independently inside their
/// ranges (quantized so every value survives the decimal-string round trip);
/// pixel noise is sigma ~ 1/SNR. label_noise mirrors a fixed fraction of
/// records across the median SNR in log space, which flips the median-split
/// label the downstream pipeline will assign.
inline SynthCohort gen_cohort(std::size_t n, std::uint64_t seed, const PhysicsConfig& config) {
    validate_config(config);
    if (n < 50) throw BadConfig("cohort size must be at least 50");

    SynthCohort cohort;
    cohort.records.resize(n);
    cohort.slabs.resize(n);
    cohort.snr.resize(n);
    cohort.flipped.assign(n, false);

    for (std::size_t i = 0; i < n; ++i) {
        rng::Stream stream(seed, 0x0C0B0 + i);
        auto& rec = cohort.records[i];
        rec.study_id = "2.25." + std::to_string(rng::mix64(rng::derive(seed, 2 * i)));
        rec.series_id = "2.25." + std::to_string(rng::mix64(rng::derive(seed, 2 * i + 1)));
        rec.instance_number = 1;
        rec.protocol_name = "SAG T1 SYNTH";
        rec.body_part = "SPINE";
        rec.coil = "SYN-SPINE";
        rec.plane = dicom::Plane::sagittal;
        rec.weighting = dicom::Weighting::T1;
        rec.tr_ms = detail::snap(stream.uniform(config.tr_ms.lo, config.tr_ms.hi),
                                 config.tr_step, config.tr_ms);
        rec.te_ms = detail::quantize(stream.uniform(config.te_ms.lo, config.te_ms.hi), 0.01);
        rec.nex = detail::snap(stream.uniform(config.nex.lo, config.nex.hi), config.nex_step,
                               config.nex);
        rec.percent_sampling =
            detail::snap(stream.uniform(config.percent_sampling.lo, config.percent_sampling.hi),
                         config.sampling_step, config.percent_sampling);
        rec.percent_phase_fov =
            detail::snap(stream.uniform(config.percent_phase_fov.lo, config.percent_phase_fov.hi),
                         config.pfov_step, config.percent_phase_fov);
        rec.fov_mm = detail::snap(stream.uniform(config.fov_mm.lo, config.fov_mm.hi),
                                  config.fov_step, config.fov_mm);
        rec.slice_thickness_mm = detail::snap(
            stream.uniform(config.slice_thickness_mm.lo, config.slice_thickness_mm.hi),
            config.thickness_step, config.slice_thickness_mm);
        rec.rows = config.rows;
        rec.cols = config.cols;
        rec.pixel_spacing_mm = std::make_pair(
            detail::quantize(*rec.fov_mm / config.cols, 0.0001),
            detail::quantize(*rec.fov_mm / config.rows, 0.0001));

        // patient covariates: decoys with no label influence
        const bool randomize_loc = config.decoy_count >= 1;
        const bool randomize_age = config.decoy_count >= 2;
        const bool randomize_weight = config.decoy_count >= 3;
        const bool randomize_sex = config.decoy_count >= 4;
        rec.slice_location_mm =
            randomize_loc
                ? detail::quantize(
                      stream.uniform(config.slice_location_mm.lo, config.slice_location_mm.hi),
                      0.01)
                : detail::quantize(
                      0.5 * (config.slice_location_mm.lo + config.slice_location_mm.hi), 0.01);
        rec.age_years = randomize_age
                            ? std::floor(stream.uniform(config.age_years.lo,
                                                        config.age_years.hi + 1.0))
                            : std::floor(0.5 * (config.age_years.lo + config.age_years.hi));
        rec.weight_kg = randomize_weight
                            ? detail::quantize(
                                  stream.uniform(config.weight_kg.lo, config.weight_kg.hi), 0.1)
                            : detail::quantize(
                                  0.5 * (config.weight_kg.lo + config.weight_kg.hi), 0.1);
        rec.sex = randomize_sex ? (stream.uniform() < 0.5 ? dicom::Sex::F : dicom::Sex::M)
                                : dicom::Sex::F;
        cohort.snr[i] = snr_model(rec, config);
    }

    // mirror-flip a fixed fraction of records across the median log-SNR
    const auto n_flips =
        static_cast<std::size_t>(std::llround(config.label_noise * static_cast<double>(n)));
    if (n_flips > 0) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        rng::Stream flip_stream(seed, 0xF11B5);
        flip_stream.shuffle(order);
        const double log_median = std::log(stats::median(cohort.snr));
        for (std::size_t k = 0; k < n_flips; ++k) {
            const std::size_t i = order[k];
            cohort.snr[i] = std::exp(2.0 * log_median - std::log(cohort.snr[i]));
            cohort.flipped[i] = true;
        }
    }

    // synthesize pixels: fixed structure plus seeded noise with sigma ~ 1/SNR
    const double snr_ref = detail::reference_snr(config);
    const double amplitude = 1200.0;
    const double offset = 1700.0;
    const double max_value = static_cast<double>((1u << config.bits_stored) - 1u);
    for (std::size_t i = 0; i < n; ++i) {
        rng::Stream noise(seed, 0x1313000 + i);
        auto& slab = cohort.slabs[i];
        slab.rows = config.rows;
        slab.cols = config.cols;
        slab.bits_stored = config.bits_stored;
        slab.samples.resize(static_cast<std::size_t>(config.rows) *
                            static_cast<std::size_t>(config.cols));
        const double sigma =
            config.noise_fraction * amplitude * (snr_ref / cohort.snr[i]);
        std::size_t k = 0;
        for (int r = 0; r < config.rows; ++r) {
            for (int c = 0; c < config.cols; ++c, ++k) {
                const double clean =
                    offset + amplitude * detail::structure_at(static_cast<std::size_t>(r),
                                                              static_cast<std::size_t>(c),
                                                              static_cast<std::size_t>(config.rows),
                                                              static_cast<std::size_t>(config.cols));
                const double value = clean + sigma * noise.normal();
                slab.samples[k] = static_cast<std::uint32_t>(
                    std::clamp(std::round(value), 0.0, max_value));
            }
        }
    }

    using shap::Direction;
    cohort.truth.directions = {
        {"tr_ms", Direction::direct},
        {"te_ms", Direction::none},
        {"nex", Direction::direct},
        {"percent_sampling", Direction::direct},
        {"percent_phase_fov", Direction::direct},
        {"fov_mm", Direction::direct},
        {"slice_thickness_mm", Direction::direct},
        {"slice_location_mm", Direction::none},
        {"age_years", Direction::none},
        {"weight_kg", Direction::none},
        {"sex_F", Direction::none},
        {"sex_M", Direction::none},
    };
    return cohort;
}

/// Fraction of planted (non-none) features whose direction is reported by at
/// least two models.
inline double check_recovery(const shap::TrendSummary& summary, const GroundTruth& truth) {
    std::size_t planted = 0, recovered = 0;
    for (const auto& [feature, direction] : truth.directions) {
        if (direction == shap::Direction::none) continue;
        ++planted;
        int agreeing = 0;
        for (const auto& cell : summary.cells)
            if (cell.feature == feature && cell.direction == direction) ++agreeing;
        if (agreeing >= 2) ++recovered;
    }
    if (planted == 0) return 0.0;
    return static_cast<double>(recovered) / static_cast<double>(planted);
}

} // namespace protoscope::synth
