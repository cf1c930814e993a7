#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "protoscope/learners/logistic.hpp"
#include "protoscope/rng.hpp"

namespace protoscope::learners {

/// Fully connected ReLU network with a single sigmoid output unit, trained by
/// mini-batch gradient descent on mean cross-entropy. Weights initialize
/// uniform in +-1/sqrt(fan_in) from the seeded counter stream.
struct MlpModel {
    // weights[l][out][in], biases[l][out]; the last layer has one output unit
    std::vector<std::vector<std::vector<double>>> weights;
    std::vector<std::vector<double>> biases;

    double probability(const std::vector<double>& x) const {
        std::vector<double> a = x;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            std::vector<double> z(weights[l].size());
            for (std::size_t o = 0; o < weights[l].size(); ++o) {
                double acc = biases[l][o];
                for (std::size_t i = 0; i < a.size(); ++i) acc += weights[l][o][i] * a[i];
                z[o] = acc;
            }
            if (l + 1 < weights.size())
                for (auto& v : z) v = std::max(v, 0.0); // ReLU on hidden layers
            a = std::move(z);
        }
        return sigmoid(a[0]);
    }
};

struct MlpGradients {
    std::vector<std::vector<std::vector<double>>> weights;
    std::vector<std::vector<double>> biases;
};

namespace mlp_detail {

inline MlpGradients zero_like(const MlpModel& model) {
    MlpGradients g;
    g.weights.resize(model.weights.size());
    g.biases.resize(model.biases.size());
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        g.weights[l].assign(model.weights[l].size(),
                            std::vector<double>(model.weights[l][0].size(), 0.0));
        g.biases[l].assign(model.biases[l].size(), 0.0);
    }
    return g;
}

} // namespace mlp_detail

/// Mean cross-entropy over the batch plus analytic gradients; the same code
/// path drives training and the finite-difference checks.
inline double mlp_loss_and_gradients(const MlpModel& model,
                                     const std::vector<std::vector<double>>& X,
                                     const std::vector<int>& y, MlpGradients& grads) {
    const std::size_t n = X.size();
    const std::size_t layers = model.weights.size();
    grads = mlp_detail::zero_like(model);
    double loss = 0.0;

    std::vector<std::vector<double>> activations(layers + 1);
    std::vector<std::vector<double>> pre(layers);
    for (std::size_t s = 0; s < n; ++s) {
        activations[0] = X[s];
        for (std::size_t l = 0; l < layers; ++l) {
            pre[l].assign(model.weights[l].size(), 0.0);
            for (std::size_t o = 0; o < model.weights[l].size(); ++o) {
                double acc = model.biases[l][o];
                const auto& row = model.weights[l][o];
                const auto& a = activations[l];
                for (std::size_t i = 0; i < a.size(); ++i) acc += row[i] * a[i];
                pre[l][o] = acc;
            }
            activations[l + 1] = pre[l];
            if (l + 1 < layers)
                for (auto& v : activations[l + 1]) v = std::max(v, 0.0);
        }
        const double z = pre[layers - 1][0];
        const double p = sigmoid(z);
        const double target = y[s] == 1 ? 1.0 : 0.0;
        const double sz = (target > 0.5 ? 1.0 : -1.0) * z;
        loss += sz > 0 ? std::log1p(std::exp(-sz)) : -sz + std::log1p(std::exp(sz));

        // backward
        std::vector<double> delta{(p - target) / static_cast<double>(n)};
        for (std::size_t l = layers; l-- > 0;) {
            const auto& a = activations[l];
            for (std::size_t o = 0; o < delta.size(); ++o) {
                grads.biases[l][o] += delta[o];
                for (std::size_t i = 0; i < a.size(); ++i)
                    grads.weights[l][o][i] += delta[o] * a[i];
            }
            if (l == 0) break;
            std::vector<double> prev(a.size(), 0.0);
            for (std::size_t i = 0; i < a.size(); ++i) {
                double acc = 0.0;
                for (std::size_t o = 0; o < delta.size(); ++o)
                    acc += model.weights[l][o][i] * delta[o];
                prev[i] = pre[l - 1][i] > 0.0 ? acc : 0.0; // ReLU derivative
            }
            delta = std::move(prev);
        }
    }
    return loss / static_cast<double>(n);
}

inline MlpModel init_mlp(std::size_t n_inputs, const std::vector<int>& hidden,
                         std::uint64_t seed) {
    MlpModel model;
    std::vector<std::size_t> sizes{n_inputs};
    for (const int h : hidden)
        if (h > 0) sizes.push_back(static_cast<std::size_t>(h));
    sizes.push_back(1);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        rng::Stream stream(seed, 0x31A000 + l);
        const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
        std::vector<std::vector<double>> w(sizes[l + 1], std::vector<double>(sizes[l]));
        for (auto& row : w)
            for (auto& v : row) v = stream.uniform(-bound, bound);
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(sizes[l + 1], 0.0);
    }
    return model;
}

inline MlpModel fit_mlp(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                        const std::vector<int>& hidden, double learning_rate, int epochs,
                        std::uint64_t seed, int batch_size = 32) {
    const std::size_t n = X.size();
    MlpModel model = init_mlp(X[0].size(), hidden, seed);
    MlpGradients grads;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const auto chunk = static_cast<std::size_t>(std::max(1, batch_size));
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng::Stream stream(seed, 0xE70000 + static_cast<std::uint64_t>(epoch));
        stream.shuffle(order);
        for (std::size_t start = 0; start < n; start += chunk) {
            const std::size_t stop = std::min(start + chunk, n);
            std::vector<std::vector<double>> bx;
            std::vector<int> by;
            bx.reserve(stop - start);
            by.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                bx.push_back(X[order[k]]);
                by.push_back(y[order[k]]);
            }
            mlp_loss_and_gradients(model, bx, by, grads);
            for (std::size_t l = 0; l < model.weights.size(); ++l) {
                for (std::size_t o = 0; o < model.weights[l].size(); ++o) {
                    model.biases[l][o] -= learning_rate * grads.biases[l][o];
                    for (std::size_t i = 0; i < model.weights[l][o].size(); ++i)
                        model.weights[l][o][i] -= learning_rate * grads.weights[l][o][i];
                }
            }
        }
    }
    return model;
}

} // namespace protoscope::learners
