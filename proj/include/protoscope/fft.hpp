#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "protoscope/errors.hpp"

namespace protoscope::fft {

using cdouble = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 Cooley-Tukey. n must be a power of two.
inline void fft_pow2(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    // bit reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.141592653589793238462643383279502884;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const cdouble wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cdouble w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cdouble u = a[i + k];
                const cdouble v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

} // namespace detail

/// DFT of arbitrary length: radix-2 when possible, Bluestein's chirp-z otherwise.
inline void transform(std::vector<cdouble>& a, bool inverse = false) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    if (detail::is_pow2(n)) {
        detail::fft_pow2(a, inverse);
        return;
    }
    // Bluestein: x_k * chirp_k convolved with conjugate chirp, via pow2 FFTs.
    const double pi = 3.141592653589793238462643383279502884;
    std::size_t m = 1;
    while (m < 2 * n + 1) m <<= 1;
    std::vector<cdouble> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small
        const std::size_t k2 = (k * k) % (2 * n);
        const double ang = pi * static_cast<double>(k2) / static_cast<double>(n) *
                           (inverse ? -1.0 : 1.0);
        chirp[k] = cdouble(std::cos(ang), -std::sin(ang));
    }
    std::vector<cdouble> fa(m, cdouble(0, 0)), fb(m, cdouble(0, 0));
    for (std::size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
    fb[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(chirp[k]);
    detail::fft_pow2(fa, false);
    detail::fft_pow2(fb, false);
    for (std::size_t k = 0; k < m; ++k) fa[k] *= fb[k];
    detail::fft_pow2(fa, true);
    for (std::size_t k = 0; k < n; ++k) a[k] = fa[k] * chirp[k];
    if (inverse) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

/// Full 2-D power spectrum |F(u,v)|^2 of a rows x cols real image (row-major).
inline std::vector<double> power_spectrum_2d(const std::vector<double>& image,
                                             std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0 || image.size() != rows * cols)
        throw ShapeMismatch("power_spectrum_2d: bad image shape");
    std::vector<cdouble> grid(rows * cols);
    for (std::size_t i = 0; i < rows * cols; ++i) grid[i] = cdouble(image[i], 0.0);

    std::vector<cdouble> line(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) line[c] = grid[r * cols + c];
        transform(line);
        for (std::size_t c = 0; c < cols; ++c) grid[r * cols + c] = line[c];
    }
    line.assign(rows, cdouble(0, 0));
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t r = 0; r < rows; ++r) line[r] = grid[r * cols + c];
        transform(line);
        for (std::size_t r = 0; r < rows; ++r) grid[r * cols + c] = line[r];
    }
    std::vector<double> power(rows * cols);
    for (std::size_t i = 0; i < rows * cols; ++i) power[i] = std::norm(grid[i]);
    return power;
}

} // namespace protoscope::fft
