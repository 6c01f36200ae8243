#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "qfuse/tensor.hpp"

namespace qfuse {

/// Trainable tensor plus its AdaGrad accumulator.
template <class T>
struct Parameter {
    TensorPtr<T> value;
    std::vector<T> accumulator;
    std::string name;

    Parameter(std::string n, std::vector<int> shape)
        : value(make_tensor<T>(std::move(shape), true)),
          accumulator(value->data.size(), T(0)),
          name(std::move(n)) {}

    std::int64_t numel() const { return value->numel(); }
};

/// He-uniform fill: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <class T>
void init_he_uniform(Parameter<T>& p, int fan_in, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : p.value->data) v = static_cast<T>(dist(rng));
}

template <class T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
    for (auto* p : params) p->value->zero_grad();
}

/// AdaGrad with L2 weight decay:
///   g <- grad + wd * theta; acc <- acc + g^2; theta <- theta - lr * g / (sqrt(acc) + eps).
/// Grads are zeroed after the step.
template <class T>
void adagrad_step(const std::vector<Parameter<T>*>& params, T lr, T weight_decay, T eps = T(1e-8)) {
    for (auto* p : params) {
        auto& t = *p->value;
        if (t.grad.size() != t.data.size()) {
            throw ContractError("adagrad_step: parameter '" + p->name + "' has no gradient");
        }
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const T g = t.grad[i] + weight_decay * t.data[i];
            p->accumulator[i] += g * g;
            t.data[i] -= lr * g / (std::sqrt(p->accumulator[i]) + eps);
        }
        t.zero_grad();
    }
}

/// Plain SGD: theta <- theta - lr * grad. Grads are zeroed after the step.
template <class T>
void sgd_step(const std::vector<Parameter<T>*>& params, T lr) {
    for (auto* p : params) {
        auto& t = *p->value;
        if (t.grad.size() != t.data.size()) {
            throw ContractError("sgd_step: parameter '" + p->name + "' has no gradient");
        }
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] -= lr * t.grad[i];
        t.zero_grad();
    }
}

}  // namespace qfuse
