#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "pconv/autograd.hpp"
#include "pconv/rng.hpp"
#include "pconv/tensor.hpp"

namespace testutil {

using pconv::Rng;
using pconv::Shape;
using pconv::Tape;
using pconv::Tensor;

inline Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

inline Tensor<float> random_tensor_f(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<float> t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = float(rng.uniform(lo, hi));
    return t;
}

/// Values bounded away from zero so ReLU-family kinks are never crossed by
/// the finite-difference step.
inline Tensor<double> random_tensor_off_kink(Shape s, Rng& rng, double min_mag = 0.05,
                                             double max_mag = 1.0) {
    Tensor<double> t(s);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double mag = rng.uniform(min_mag, max_mag);
        t[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

inline Tensor<double> random_mask(Shape s, Rng& rng, double hole_prob = 0.3) {
    Tensor<double> m(s.n, 1, s.h, s.w);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < hole_prob ? 0.0 : 1.0;
    return m;
}

/// Builds a scalar loss from leaf ids bound (in order) to the given
/// parameter tensors. The builder must not capture the tensors directly; it
/// reads them from the tape so finite differences see the perturbation.
using LossBuilder =
    std::function<Tape<double>::Id(Tape<double>&, const std::vector<Tape<double>::Id>&)>;

struct FdReport {
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0;
};

/// Central finite differences against the tape gradient at `coords` random
/// coordinates per parameter. skip(param_index, coord) suppresses
/// kink-adjacent coordinates.
inline FdReport fd_check(std::vector<Tensor<double>*> params, const LossBuilder& build, Rng& rng,
                         int coords = 20, double h = 1e-3,
                         const std::function<bool(std::size_t, std::size_t)>& skip = nullptr) {
    auto eval = [&]() -> double {
        Tape<double> local;
        std::vector<Tape<double>::Id> ids;
        for (Tensor<double>* p : params) ids.push_back(local.input(*p));
        auto loss = build(local, ids);
        return double(local.value(loss).scalar_value());
    };

    // One forward+backward for the analytic gradients.
    Tape<double> tape;
    std::vector<Tape<double>::Id> ids;
    for (Tensor<double>* p : params) ids.push_back(tape.input(*p));
    tape.backward(build(tape, ids));

    FdReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<double>& p = *params[pi];
        const Tensor<double>& analytic = tape.grad(ids[pi]);
        for (int k = 0; k < coords; ++k) {
            const std::size_t ci = std::size_t(rng.next_below(p.size()));
            if (skip && skip(pi, ci)) {
                ++rep.skipped;
                continue;
            }
            const double orig = p[ci];
            p[ci] = orig + h;
            const double fp = eval();
            p[ci] = orig - h;
            const double fm = eval();
            p[ci] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic[ci];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-3});
            rep.max_rel_err = std::max(rep.max_rel_err, std::abs(fd - an) / denom);
            ++rep.checked;
        }
    }
    return rep;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
    return worst;
}

template <typename T>
bool bit_identical(const Tensor<T>& a, const Tensor<T>& b) {
    if (!(a.shape() == b.shape())) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

} // namespace testutil
