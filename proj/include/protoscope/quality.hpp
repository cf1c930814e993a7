#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "protoscope/dicom.hpp"
#include "protoscope/errors.hpp"
#include "protoscope/fft.hpp"
#include "protoscope/stats.hpp"

namespace protoscope::quality {

struct QualityMetrics {
    double entropy_power = 0.0;   // >= 0
    double spectral_flatness = 0.0; // in [0,1]
};

struct QualityLabel {
    double score = 0.0; // combined normalized badness score in [0,1]
    int cls = 0;        // 1 = good (score strictly below the cohort median)
};

inline constexpr int kHistogramBins = 256;
inline constexpr double kTwoPiE = 17.079468445347132; // 2*pi*e

/// Entropy power (1/(2*pi*e)) * exp(2h). h is the differential entropy of the
/// intensity distribution, estimated as the Shannon entropy (nats) of a
/// 256-bin histogram over [min, max] plus ln(bin width). A constant image has
/// zero intensity uncertainty and returns 0.
inline double entropy_power(const dicom::PixelSlab& pixels) {
    if (pixels.samples.empty()) throw EmptyImage("entropy_power of empty image");
    const auto [lo_it, hi_it] = std::minmax_element(pixels.samples.begin(), pixels.samples.end());
    const double lo = static_cast<double>(*lo_it);
    const double hi = static_cast<double>(*hi_it);
    if (hi <= lo) return 0.0;

    std::vector<double> hist(kHistogramBins, 0.0);
    const double scale = static_cast<double>(kHistogramBins) / (hi - lo);
    for (const auto s : pixels.samples) {
        int bin = static_cast<int>((static_cast<double>(s) - lo) * scale);
        if (bin >= kHistogramBins) bin = kHistogramBins - 1;
        hist[static_cast<std::size_t>(bin)] += 1.0;
    }
    const double n = static_cast<double>(pixels.samples.size());
    double shannon = 0.0;
    for (const double c : hist) {
        if (c <= 0.0) continue;
        const double p = c / n;
        shannon -= p * std::log(p);
    }
    const double bin_width = (hi - lo) / static_cast<double>(kHistogramBins);
    const double h = shannon + std::log(bin_width);
    return std::exp(2.0 * h) / kTwoPiE;
}

/// Wiener entropy of the 2-D power spectrum: geometric mean over arithmetic
/// mean of |F(u,v)|^2 with the DC bin excluded. Near 1 for white noise, near 0
/// for spectra concentrated in a few bins; a constant image returns 0.
inline double spectral_flatness(const dicom::PixelSlab& pixels) {
    if (pixels.samples.empty()) throw EmptyImage("spectral_flatness of empty image");
    if (pixels.rows < 2 || pixels.cols < 2)
        throw EmptyImage("spectral_flatness needs at least a 2x2 image");
    const auto [lo_it, hi_it] = std::minmax_element(pixels.samples.begin(), pixels.samples.end());
    if (*lo_it == *hi_it) return 0.0; // power only at DC, which is excluded

    std::vector<double> image(pixels.samples.size());
    for (std::size_t i = 0; i < image.size(); ++i)
        image[i] = static_cast<double>(pixels.samples[i]);
    const auto power = fft::power_spectrum_2d(image, static_cast<std::size_t>(pixels.rows),
                                              static_cast<std::size_t>(pixels.cols));

    double log_sum = 0.0;
    double sum = 0.0;
    const std::size_t total = power.size();
    for (std::size_t i = 1; i < total; ++i) { // index 0 is the DC bin
        const double p = power[i];
        if (p <= 0.0) return 0.0; // an exactly empty bin collapses the geometric mean
        log_sum += std::log(p);
        sum += p;
    }
    const double bins = static_cast<double>(total - 1);
    const double geometric = std::exp(log_sum / bins);
    const double arithmetic = sum / bins;
    if (arithmetic <= 0.0) return 0.0;
    return std::clamp(geometric / arithmetic, 0.0, 1.0);
}

inline QualityMetrics compute_metrics(const dicom::PixelSlab& pixels) {
    return {entropy_power(pixels), spectral_flatness(pixels)};
}

/// Min-max normalize each metric across the cohort, average the two, and
/// split at the median: class 1 (good) strictly below, ties at the median go
/// to class 0.
inline std::vector<QualityLabel> combine_and_label(const std::vector<QualityMetrics>& metrics) {
    if (metrics.size() < 2)
        throw DegenerateDistribution("combine_and_label needs at least two instances");
    std::vector<double> ep(metrics.size()), sf(metrics.size());
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        ep[i] = metrics[i].entropy_power;
        sf[i] = metrics[i].spectral_flatness;
    }
    if (stats::is_constant(ep)) throw DegenerateDistribution("entropy power constant across cohort");
    if (stats::is_constant(sf))
        throw DegenerateDistribution("spectral flatness constant across cohort");
    const auto ep_n = stats::min_max_normalize(ep);
    const auto sf_n = stats::min_max_normalize(sf);

    std::vector<QualityLabel> labels(metrics.size());
    std::vector<double> scores(metrics.size());
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        scores[i] = 0.5 * (ep_n[i] + sf_n[i]);
        labels[i].score = scores[i];
    }
    const double med = stats::median(scores);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i].cls = scores[i] < med ? 1 : 0;
    return labels;
}

} // namespace protoscope::quality
