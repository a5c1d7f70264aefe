#pragma once

#include <string>
#include <vector>

#include "unlearn/errors.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

// Plain gradient descent, p <- p - eta * g. Momentum is opt-in; the default
// matches the vanilla update rule the rest of the library assumes.
struct OptimizerState {
    double learning_rate = 0.01;
    double momentum = 0.0;
    std::vector<Tensor> velocity;  // allocated lazily when momentum > 0

    explicit OptimizerState(double eta, double mu = 0.0) : learning_rate(eta), momentum(mu) {
        if (eta <= 0.0) {
            throw NumericError("OptimizerState: learning rate must be positive, got " +
                               std::to_string(eta));
        }
    }
};

inline void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                     OptimizerState& state) {
    if (params.size() != grads.size()) {
        throw NumericError("sgd_step: " + std::to_string(params.size()) + " params vs " +
                           std::to_string(grads.size()) + " grads");
    }
    if (state.momentum > 0.0 && state.velocity.empty()) {
        for (const Tensor& p : params) state.velocity.push_back(Tensor::zeros(p.shape()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g)) {
            throw NumericError("sgd_step: param " + std::to_string(i) + " shape " +
                               p.shape_string() + " vs grad " + g.shape_string());
        }
        if (state.momentum > 0.0) {
            Tensor& v = state.velocity[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                v[j] = state.momentum * v[j] - state.learning_rate * g[j];
                p[j] += v[j];
            }
        } else {
            for (std::size_t j = 0; j < p.size(); ++j) {
                p[j] -= state.learning_rate * g[j];
            }
        }
    }
}

}  // namespace unlearn
