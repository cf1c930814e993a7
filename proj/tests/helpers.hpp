#pragma once

// Shared fixture builders for the test suites.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "protoscope/dicom.hpp"
#include "protoscope/rng.hpp"

namespace test_helpers {

using protoscope::dicom::MetaRecord;
using protoscope::dicom::PixelSlab;

/// Round through a fixed decimal string so shortest-round-trip formatting
/// stays short enough for a DICOM DS value.
inline double quantize(double v, double step) {
    const int decimals = step >= 0.1 ? 1 : step >= 0.01 ? 2 : 4;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return std::strtod(buf, nullptr);
}

/// Randomized but DS-representable record with every optional field populated.
inline MetaRecord random_record(protoscope::rng::Stream& stream) {
    MetaRecord rec;
    rec.study_id = "1.2.840.99." + std::to_string(stream.uniform_int(1, 999999));
    rec.series_id = rec.study_id + "." + std::to_string(stream.uniform_int(1, 9999));
    rec.instance_number = static_cast<int>(stream.uniform_int(1, 40));
    rec.protocol_name = stream.uniform() < 0.5 ? "SAG T1 FSE" : "SAG T2 FSE";
    rec.body_part = stream.uniform() < 0.5 ? "CSPINE" : "LSPINE";
    rec.coil = "SPINE" + std::to_string(stream.uniform_int(1, 3));
    rec.plane = protoscope::dicom::Plane::sagittal;
    rec.weighting = rec.protocol_name.find("T1") != std::string::npos
                        ? protoscope::dicom::Weighting::T1
                        : protoscope::dicom::Weighting::T2;
    rec.tr_ms = quantize(stream.uniform(200, 4000), 0.01);
    rec.te_ms = quantize(stream.uniform(5, 120), 0.01);
    rec.nex = quantize(stream.uniform(1, 4), 0.01);
    rec.percent_sampling = quantize(stream.uniform(50, 100), 0.01);
    rec.percent_phase_fov = quantize(stream.uniform(50, 100), 0.01);
    rec.fov_mm = quantize(stream.uniform(150, 450), 0.01);
    rec.slice_thickness_mm = quantize(stream.uniform(2, 6), 0.01);
    rec.slice_location_mm = quantize(stream.uniform(-80, 80), 0.01);
    rec.age_years = std::floor(stream.uniform(18, 95));
    rec.weight_kg = quantize(stream.uniform(45, 130), 0.1);
    rec.sex = stream.uniform() < 0.5 ? protoscope::dicom::Sex::F : protoscope::dicom::Sex::M;
    return rec;
}

inline PixelSlab random_slab(protoscope::rng::Stream& stream, int rows = 8, int cols = 8,
                             int bits_stored = 12) {
    PixelSlab slab;
    slab.rows = rows;
    slab.cols = cols;
    slab.bits_stored = bits_stored;
    slab.samples.resize(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    const std::uint32_t limit = (1u << bits_stored) - 1u;
    for (auto& s : slab.samples)
        s = static_cast<std::uint32_t>(stream.uniform_int(0, limit));
    slab.samples[0] = 0;     // pin the intensity range so metrics are comparable
    slab.samples[1] = limit;
    return slab;
}

inline void attach_dims(MetaRecord& rec, const PixelSlab& slab) {
    rec.rows = slab.rows;
    rec.cols = slab.cols;
    rec.pixel_spacing_mm = std::make_pair(quantize(*rec.fov_mm / slab.cols, 0.0001),
                                          quantize(*rec.fov_mm / slab.rows, 0.0001));
}

} // namespace test_helpers
