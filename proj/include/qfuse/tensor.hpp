#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "qfuse/errors.hpp"

namespace qfuse {

template <class T>
struct Tensor;

template <class T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

inline std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Thread-local switch that disables graph recording, e.g. for inference
/// rollouts and target-network forwards.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Dense row-major N-d array with reverse-mode gradient tracking.
/// Nodes form a DAG: `parents` keeps inputs alive, `backward_fn` scatters
/// this node's grad into the parents' grad buffers.
template <class T>
struct Tensor : std::enable_shared_from_this<Tensor<T>> {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;  // same length as data when requires_grad, else empty
    bool requires_grad = false;
    std::vector<TensorPtr<T>> parents;
    std::function<void()> backward_fn;  // empty on leaves

    Tensor(std::vector<int> s, std::vector<T> d, bool rg)
        : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
        for (int e : shape) {
            if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
        }
        if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
            throw DimensionError("data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        }
        if (requires_grad) grad.assign(data.size(), T(0));
    }

    Tensor(const Tensor&) = delete;
    Tensor& operator=(const Tensor&) = delete;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool is_scalar() const { return data.size() == 1; }
    bool is_leaf() const { return !backward_fn; }

    T item() const {
        if (!is_scalar()) throw ContractError("item() requires a scalar tensor, shape is " + shape_str(shape));
        return data[0];
    }

    void zero_grad() {
        std::fill(grad.begin(), grad.end(), T(0));
    }

    void accumulate_grad(const T* g, std::size_t n) {
        if (n != data.size()) throw ContractError("gradient length mismatch");
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
        for (std::size_t i = 0; i < n; ++i) grad[i] += g[i];
    }
};

template <class T>
TensorPtr<T> make_tensor(std::vector<int> shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return std::make_shared<Tensor<T>>(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), T(0)),
                                       requires_grad);
}

template <class T>
TensorPtr<T> make_tensor(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
    return std::make_shared<Tensor<T>>(std::move(shape), std::move(values), requires_grad);
}

template <class T>
TensorPtr<T> scalar_tensor(T value, bool requires_grad = false) {
    return make_tensor<T>({1}, std::vector<T>{value}, requires_grad);
}

/// Copy of `t` cut loose from the graph.
template <class T>
TensorPtr<T> detach(const TensorPtr<T>& t) {
    return make_tensor<T>(t->shape, t->data, false);
}

template <class T>
bool all_finite(const TensorPtr<T>& t) {
    for (T v : t->data) {
        if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
}

namespace detail {

/// Post-order DFS (iterative; graphs are shallow but batches of them add up).
template <class T>
std::vector<Tensor<T>*> topo_order(Tensor<T>* root) {
    std::vector<Tensor<T>*> order;
    std::unordered_set<Tensor<T>*> visited;
    std::vector<std::pair<Tensor<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            Tensor<T>* child = node->parents[next_child++].get();
            if (child && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; interior node gradients are reset at the start of each sweep.
template <class T>
void backward(const TensorPtr<T>& loss) {
    if (!loss) throw ContractError("backward() on null tensor");
    if (!loss->is_scalar()) {
        throw ContractError("backward() requires a scalar loss, shape is " + shape_str(loss->shape));
    }
    if (!loss->requires_grad) return;  // constant loss: nothing reachable

    auto order = detail::topo_order(loss.get());
    for (Tensor<T>* node : order) {
        if (!node->is_leaf()) node->grad.assign(node->data.size(), T(0));
    }
    if (loss->grad.size() != 1) loss->grad.assign(1, T(0));
    loss->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn && (*it)->requires_grad) (*it)->backward_fn();
    }
}

}  // namespace qfuse
