#pragma once

#include <cmath>
#include <vector>

#include "protoscope/errors.hpp"

namespace protoscope::learners {

/// Per-feature mean/std estimated on training rows only. Constant features
/// are flagged and passed through unscaled (after centering they are zero).
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<bool> constant;

    static Standardizer fit(const std::vector<std::vector<double>>& X) {
        Standardizer s;
        if (X.empty()) return s;
        const std::size_t d = X[0].size();
        const double n = static_cast<double>(X.size());
        s.mean.assign(d, 0.0);
        s.stddev.assign(d, 0.0);
        s.constant.assign(d, false);
        for (const auto& row : X)
            for (std::size_t j = 0; j < d; ++j) s.mean[j] += row[j];
        for (std::size_t j = 0; j < d; ++j) s.mean[j] /= n;
        for (const auto& row : X)
            for (std::size_t j = 0; j < d; ++j) {
                const double dx = row[j] - s.mean[j];
                s.stddev[j] += dx * dx;
            }
        for (std::size_t j = 0; j < d; ++j) {
            s.stddev[j] = std::sqrt(s.stddev[j] / n);
            if (s.stddev[j] <= 0.0) {
                s.constant[j] = true;
                s.stddev[j] = 1.0;
            }
        }
        return s;
    }

    std::vector<double> apply(const std::vector<double>& row) const {
        if (row.size() != mean.size()) throw SchemaMismatch("standardizer width mismatch");
        std::vector<double> out(row.size());
        for (std::size_t j = 0; j < row.size(); ++j)
            out[j] = (row[j] - mean[j]) / stddev[j];
        return out;
    }

    std::vector<std::vector<double>> apply_all(const std::vector<std::vector<double>>& X) const {
        std::vector<std::vector<double>> out;
        out.reserve(X.size());
        for (const auto& row : X) out.push_back(apply(row));
        return out;
    }
};

} // namespace protoscope::learners
