#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pconv/model.hpp"
#include "pconv/tensor.hpp"

namespace pconv {

/// Adam first/second moment buffers, one pair per trainable parameter, in
/// the model's trainable order.
template <typename T = float>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t t = 0;
    std::vector<std::string> names;
    std::vector<Tensor<T>> m, v;

    static AdamState init(const Model<T>& model) {
        AdamState s;
        for (int i : model.trainable_indices()) {
            const auto& p = model.params[std::size_t(i)];
            s.names.push_back(p.name);
            s.m.emplace_back(p.value.shape());
            s.v.emplace_back(p.value.shape());
        }
        return s;
    }

    void check_matches(const Model<T>& model) const {
        const auto idx = model.trainable_indices();
        if (idx.size() != names.size())
            throw ConfigError("adam state covers " + std::to_string(names.size()) +
                              " parameters but the model has " + std::to_string(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto& p = model.params[std::size_t(idx[k])];
            if (p.name != names[k] || !(p.value.shape() == m[k].shape()))
                throw ConfigError("adam state does not match parameter '" + p.name + "'");
        }
    }
};

/// One bias-corrected Adam update, applied in place to the model's trainable
/// parameters. grads is parallel to the trainable order. Math runs in
/// double; storage stays in T.
template <typename T>
void adam_step(Model<T>& model, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               double lr) {
    const auto idx = model.trainable_indices();
    if (grads.size() != idx.size())
        throw ContractError("adam_step: expected " + std::to_string(idx.size()) +
                            " gradient tensors, got " + std::to_string(grads.size()));
    state.check_matches(model);
    for (std::size_t k = 0; k < idx.size(); ++k)
        if (!grads[k].all_finite())
            throw NumericError("adam_step: non-finite gradient in parameter '" +
                               state.names[k] + "'");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        Tensor<T>& p = model.params[std::size_t(idx[k])].value;
        const Tensor<T>& g = grads[k];
        Tensor<T>& m = state.m[k];
        Tensor<T>& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = double(g[i]);
            const double mi = state.beta1 * double(m[i]) + (1.0 - state.beta1) * gi;
            const double vi = state.beta2 * double(v[i]) + (1.0 - state.beta2) * gi * gi;
            m[i] = T(mi);
            v[i] = T(vi);
            p[i] = T(double(p[i]) - lr * (mi / bc1) / (std::sqrt(vi / bc2) + state.eps));
        }
    }
}

} // namespace pconv
