#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "protoscope/quality.hpp"
#include "protoscope/rng.hpp"

using namespace protoscope;
using namespace protoscope::quality;
using protoscope::dicom::PixelSlab;

namespace {

PixelSlab make_slab(int rows, int cols, int bits = 12) {
    PixelSlab slab;
    slab.rows = rows;
    slab.cols = cols;
    slab.bits_stored = bits;
    slab.samples.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0);
    return slab;
}

} // namespace

TEST_CASE("constant image has zero entropy power and zero flatness", "[quality]") {
    auto slab = make_slab(16, 16);
    std::fill(slab.samples.begin(), slab.samples.end(), 1000u);
    CHECK(entropy_power(slab) == 0.0);
    CHECK(spectral_flatness(slab) == 0.0);
}

TEST_CASE("empty image raises EmptyImage", "[quality]") {
    PixelSlab slab;
    CHECK_THROWS_AS(entropy_power(slab), EmptyImage);
    CHECK_THROWS_AS(spectral_flatness(slab), EmptyImage);
}

TEST_CASE("uniform samples over [0,255] match the analytic entropy power", "[quality]") {
    // analytic differential entropy of U(0,256) is ln 256, so
    // N = exp(2 ln 256) / (2 pi e) ~ 3836; the histogram estimate lands within 5%
    auto slab = make_slab(1000, 1000, 8);
    rng::Stream stream(123, 0);
    for (auto& s : slab.samples) s = static_cast<std::uint32_t>(stream.uniform_int(0, 255));
    const double expected = 65536.0 / kTwoPiE;
    const double got = entropy_power(slab);
    CHECK(std::abs(got - expected) / expected < 0.05);
}

TEST_CASE("entropy power is invariant to pixel permutation", "[quality]") {
    auto slab = make_slab(32, 32);
    rng::Stream stream(5, 0);
    for (auto& s : slab.samples) s = static_cast<std::uint32_t>(stream.uniform_int(0, 4095));
    auto shuffled = slab;
    std::vector<std::size_t> order(slab.samples.size());
    std::iota(order.begin(), order.end(), 0);
    stream.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i)
        shuffled.samples[i] = slab.samples[order[i]];
    CHECK(entropy_power(slab) == entropy_power(shuffled));
}

TEST_CASE("white noise is flatter than a smooth blob and a pure sinusoid", "[quality]") {
    const int n = 128;
    auto noise = make_slab(n, n);
    rng::Stream stream(7, 0);
    for (auto& s : noise.samples) s = static_cast<std::uint32_t>(stream.uniform_int(0, 4095));

    auto blob = make_slab(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double dr = (r - n / 2.0) / (n / 4.0), dc = (c - n / 2.0) / (n / 4.0);
            blob.samples[static_cast<std::size_t>(r) * n + c] =
                static_cast<std::uint32_t>(4000.0 * std::exp(-(dr * dr + dc * dc)));
        }

    auto sinusoid = make_slab(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            sinusoid.samples[static_cast<std::size_t>(r) * n + c] = static_cast<std::uint32_t>(
                2000.0 + 1500.0 * std::sin(2.0 * 3.14159265358979 * (4.0 * r + 8.0 * c) / n));

    const double f_noise = spectral_flatness(noise);
    const double f_blob = spectral_flatness(blob);
    const double f_sin = spectral_flatness(sinusoid);
    CHECK(f_noise >= 0.5);
    CHECK(f_noise > f_blob);
    CHECK(f_sin <= 0.01);
}

TEST_CASE("spectral flatness is invariant to circular shifts", "[quality]") {
    const int n = 32;
    auto slab = make_slab(n, n);
    rng::Stream stream(9, 0);
    for (auto& s : slab.samples) s = static_cast<std::uint32_t>(stream.uniform_int(0, 4095));
    auto shifted = slab;
    const int dr = 5, dc = 11;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            shifted.samples[static_cast<std::size_t>((r + dr) % n) * n + (c + dc) % n] =
                slab.samples[static_cast<std::size_t>(r) * n + c];
    CHECK(spectral_flatness(slab) == Catch::Approx(spectral_flatness(shifted)).margin(1e-9));
}

TEST_CASE("combine_and_label splits at the median with ties going to class 0", "[quality]") {
    // engineered so normalized columns equal the raw values
    std::vector<QualityMetrics> metrics = {
        {0.1, 0.1}, {0.2, 0.2}, {0.9, 0.9}, {0.0, 0.0}, {1.0, 1.0}};
    const auto labels = combine_and_label(metrics);
    // scores are [0.1, 0.2, 0.9, 0.0, 1.0]; median = 0.2
    CHECK(labels[0].cls == 1);
    CHECK(labels[1].cls == 0); // exactly at the median
    CHECK(labels[2].cls == 0);
    CHECK(labels[3].cls == 1);
    CHECK(labels[4].cls == 0);
    CHECK(labels[0].score == Catch::Approx(0.1));
}

TEST_CASE("combine_and_label is invariant to affine rescaling of a metric", "[quality]") {
    rng::Stream stream(11, 0);
    std::vector<QualityMetrics> metrics(101);
    for (auto& m : metrics) {
        m.entropy_power = stream.uniform(0, 5000);
        m.spectral_flatness = stream.uniform();
    }
    auto scaled = metrics;
    for (auto& m : scaled) m.entropy_power = 3.0 * m.entropy_power + 7.0;
    const auto a = combine_and_label(metrics);
    const auto b = combine_and_label(scaled);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].cls == b[i].cls);
        CHECK(a[i].score == Catch::Approx(b[i].score).margin(1e-12));
    }
}

TEST_CASE("class proportions are balanced up to median ties", "[quality]") {
    rng::Stream stream(13, 0);
    std::vector<QualityMetrics> metrics(400);
    for (auto& m : metrics) {
        m.entropy_power = stream.uniform(0, 5000);
        m.spectral_flatness = stream.uniform();
    }
    const auto labels = combine_and_label(metrics);
    std::vector<double> scores;
    int good = 0;
    for (const auto& l : labels) {
        scores.push_back(l.score);
        good += l.cls;
    }
    const double med = stats::median(scores);
    int ties = 0;
    for (const double s : scores)
        if (s == med) ++ties;
    const int bad = static_cast<int>(labels.size()) - good;
    CHECK(std::abs(good - bad) <= std::max(ties, 1));
}

TEST_CASE("a constant metric column raises DegenerateDistribution", "[quality]") {
    std::vector<QualityMetrics> metrics = {{1.0, 0.5}, {1.0, 0.7}, {1.0, 0.9}};
    CHECK_THROWS_AS(combine_and_label(metrics), DegenerateDistribution);
    CHECK_THROWS_AS(combine_and_label({{1.0, 0.5}}), DegenerateDistribution);
}
