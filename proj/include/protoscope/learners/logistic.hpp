#pragma once

#include <cmath>
#include <vector>

namespace protoscope::learners {

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// L2-regularized logistic regression on standardized features. The bias is
/// not regularized.
struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;

    double decision(const std::vector<double>& x) const {
        double z = bias;
        for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
        return z;
    }
    double probability(const std::vector<double>& x) const { return sigmoid(decision(x)); }
};

namespace logistic_detail {

inline double loss(const LogisticModel& m, const std::vector<std::vector<double>>& X,
                   const std::vector<int>& y, double lambda) {
    double total = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double z = m.decision(X[i]);
        // log(1 + exp(-s z)) with s = +-1, numerically stable
        const double s = y[i] == 1 ? 1.0 : -1.0;
        const double sz = s * z;
        total += sz > 0 ? std::log1p(std::exp(-sz)) : -sz + std::log1p(std::exp(sz));
    }
    total /= static_cast<double>(X.size());
    double reg = 0.0;
    for (const double w : m.weights) reg += w * w;
    return total + 0.5 * lambda * reg;
}

} // namespace logistic_detail

/// Full-batch gradient descent with Armijo backtracking, run to gradient-norm
/// tolerance 1e-6 or max_iter.
inline LogisticModel fit_logistic(const std::vector<std::vector<double>>& X,
                                  const std::vector<int>& y, double lambda,
                                  int max_iter = 5000, double tol = 1e-6) {
    const std::size_t n = X.size();
    const std::size_t d = n == 0 ? 0 : X[0].size();
    LogisticModel model;
    model.weights.assign(d, 0.0);

    std::vector<double> grad_w(d);
    for (int iter = 0; iter < max_iter; ++iter) {
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double err = sigmoid(model.decision(X[i])) - (y[i] == 1 ? 1.0 : 0.0);
            for (std::size_t j = 0; j < d; ++j) grad_w[j] += err * X[i][j];
            grad_b += err;
        }
        double norm_sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            grad_w[j] = grad_w[j] / static_cast<double>(n) + lambda * model.weights[j];
            norm_sq += grad_w[j] * grad_w[j];
        }
        grad_b /= static_cast<double>(n);
        norm_sq += grad_b * grad_b;
        if (std::sqrt(norm_sq) <= tol) break;

        const double current = logistic_detail::loss(model, X, y, lambda);
        double step = 1.0;
        LogisticModel trial = model;
        for (int backtrack = 0; backtrack < 50; ++backtrack) {
            for (std::size_t j = 0; j < d; ++j)
                trial.weights[j] = model.weights[j] - step * grad_w[j];
            trial.bias = model.bias - step * grad_b;
            if (logistic_detail::loss(trial, X, y, lambda) <= current - 0.5 * step * norm_sq)
                break;
            step *= 0.5;
        }
        model = trial;
    }
    return model;
}

} // namespace protoscope::learners
