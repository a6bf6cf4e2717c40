#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "pconv/ops.hpp"
#include "pconv/partial_conv.hpp"
#include "pconv/tensor.hpp"

namespace pconv {

/// Reverse-mode differentiation tape. Operations execute eagerly and record
/// a backward closure; backward() replays the closures once, in reverse
/// order, accumulating gradients additively. A tape is built per forward
/// pass, confined to one thread, and discarded after backward.
template <typename T = float>
class Tape {
public:
    using Id = std::int32_t;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Introduces a leaf. Leaves with requires_grad=false never receive
    /// gradients (their grad buffers stay exactly zero).
    Id input(Tensor<T> v, bool requires_grad = true) {
        entries_.push_back({std::move(v), requires_grad});
        return Id(entries_.size() - 1);
    }

    Id constant(Tensor<T> v) { return input(std::move(v), false); }

    const Tensor<T>& value(Id id) const { return entries_[std::size_t(id)].value; }
    bool requires_grad(Id id) const { return entries_[std::size_t(id)].requires_grad; }

    /// Gradient buffer for an entry; valid after backward().
    const Tensor<T>& grad(Id id) const {
        if (grads_.empty()) throw ContractError("Tape::grad: backward() has not run");
        return grads_[std::size_t(id)];
    }

    /// Records a computed value plus the closure that propagates its
    /// gradient. Extension point for ops defined outside this class.
    Id emit(Tensor<T> value, bool requires_grad, std::function<void(Tape&)> bwd) {
        Id id = input(std::move(value), requires_grad);
        if (requires_grad && bwd) ops_.push_back(std::move(bwd));
        return id;
    }

    void add_grad(Id id, const Tensor<T>& g) {
        Tensor<T>& dst = grads_[std::size_t(id)];
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }

    Tensor<T>& grad_buffer(Id id) { return grads_[std::size_t(id)]; }

    void backward(Id loss) {
        if (!value(loss).is_scalar())
            throw ContractError("Tape::backward: loss must be a scalar tensor, got " +
                                value(loss).shape().str());
        grads_.clear();
        grads_.reserve(entries_.size());
        for (const Entry& e : entries_) grads_.emplace_back(e.value.shape());
        grads_[std::size_t(loss)][0] = T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(*this);
    }

    // ---- primitive tensor ops ----

    Id conv2d(Id x, Id w, Id b, int stride, int pad) {
        Tensor<T> y = ::pconv::conv2d(value(x), value(w), value(b), stride, pad);
        const bool req = requires_grad(x) || requires_grad(w) || requires_grad(b);
        return emit(std::move(y), req, [x, w, b, stride, pad, out = next_id()](Tape& t) {
            const Tensor<T>& gy = t.grad(out);
            if (t.requires_grad(x))
                t.add_grad(x, conv2d_backward_input(t.value(x).shape(), t.value(w), gy, stride, pad));
            if (t.requires_grad(w))
                t.add_grad(w, conv2d_backward_weights(t.value(x), t.value(w).shape(), gy, stride, pad));
            if (t.requires_grad(b)) t.add_grad(b, conv2d_backward_bias(gy));
        });
    }

    /// Partial convolution with a constant mask. The updated mask is
    /// returned through mask_out (it is data, not a differentiable value).
    Id pconv(Id x, Id w, Id b, const Tensor<T>& mask, int stride, int pad,
             Tensor<T>* mask_out = nullptr) {
        MaskedFeature<T> in{value(x), mask};
        MaskedFeature<T> r = pconv_forward(in, value(w), value(b), stride, pad);
        if (mask_out) *mask_out = r.mask;
        const bool req = requires_grad(x) || requires_grad(w) || requires_grad(b);
        return emit(std::move(r.features), req,
                    [x, w, b, mask, stride, pad, out = next_id()](Tape& t) {
                        MaskedFeature<T> in2{t.value(x), mask};
                        PconvGrads<T> g = pconv_backward(in2, t.value(w), t.grad(out), stride, pad);
                        if (t.requires_grad(x)) t.add_grad(x, g.gx);
                        if (t.requires_grad(w)) t.add_grad(w, g.gw);
                        if (t.requires_grad(b)) t.add_grad(b, g.gb);
                    });
    }

    Id batch_norm_train(Id x, Id gamma, Id beta, T eps, T momentum,
                        Tensor<T>* running_mean, Tensor<T>* running_var) {
        Tensor<T> rm_local = running_mean ? *running_mean
                                          : Tensor<T>(1, value(x).c(), 1, 1, T(0));
        Tensor<T> rv_local = running_var ? *running_var
                                         : Tensor<T>(1, value(x).c(), 1, 1, T(1));
        BnCache<T> cache;
        Tensor<T> y = batch_norm(value(x), value(gamma), value(beta), eps, BnMode::Train,
                                 rm_local, rv_local, momentum, &cache);
        if (running_mean) *running_mean = rm_local;
        if (running_var) *running_var = rv_local;
        const bool req = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
        return emit(std::move(y), req, [x, gamma, beta, cache, out = next_id()](Tape& t) {
            BnGrads<T> g = batch_norm_backward(t.value(x), t.value(gamma), cache, t.grad(out));
            if (t.requires_grad(x)) t.add_grad(x, g.gx);
            if (t.requires_grad(gamma)) t.add_grad(gamma, g.ggamma);
            if (t.requires_grad(beta)) t.add_grad(beta, g.gbeta);
        });
    }

    Id batch_norm_eval(Id x, Id gamma, Id beta, T eps, Tensor<T> running_mean,
                       Tensor<T> running_var) {
        Tensor<T> rm = running_mean, rv = running_var;
        Tensor<T> y = batch_norm(value(x), value(gamma), value(beta), eps, BnMode::Eval, rm, rv);
        const bool req = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
        return emit(std::move(y), req,
                    [x, gamma, beta, eps, rm = std::move(running_mean),
                     rv = std::move(running_var), out = next_id()](Tape& t) {
                        BnGrads<T> g = batch_norm_eval_backward(t.value(x), t.value(gamma), rm,
                                                                rv, eps, t.grad(out));
                        if (t.requires_grad(x)) t.add_grad(x, g.gx);
                        if (t.requires_grad(gamma)) t.add_grad(gamma, g.ggamma);
                        if (t.requires_grad(beta)) t.add_grad(beta, g.gbeta);
                    });
    }

    Id relu(Id x) {
        Tensor<T> y = ::pconv::relu(value(x));
        return emit(std::move(y), requires_grad(x), [x, out = next_id()](Tape& t) {
            const Tensor<T>& xv = t.value(x);
            const Tensor<T>& gy = t.grad(out);
            Tensor<T> gx(xv.shape());
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] = xv[i] > T(0) ? gy[i] : T(0);
            t.add_grad(x, gx);
        });
    }

    Id leaky_relu(Id x, T slope) {
        Tensor<T> y = ::pconv::leaky_relu(value(x), slope);
        return emit(std::move(y), requires_grad(x), [x, slope, out = next_id()](Tape& t) {
            const Tensor<T>& xv = t.value(x);
            const Tensor<T>& gy = t.grad(out);
            Tensor<T> gx(xv.shape());
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] = xv[i] > T(0) ? gy[i] : slope * gy[i];
            t.add_grad(x, gx);
        });
    }

    Id sigmoid(Id x) {
        Tensor<T> y = ::pconv::sigmoid(value(x));
        return emit(Tensor<T>(y), requires_grad(x), [x, y = std::move(y), out = next_id()](Tape& t) {
            const Tensor<T>& gy = t.grad(out);
            Tensor<T> gx(y.shape());
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] = gy[i] * y[i] * (T(1) - y[i]);
            t.add_grad(x, gx);
        });
    }

    Id max_pool2(Id x) {
        std::vector<std::size_t> argmax;
        Tensor<T> y = ::pconv::max_pool2(value(x), &argmax);
        return emit(std::move(y), requires_grad(x),
                    [x, argmax = std::move(argmax), out = next_id()](Tape& t) {
                        t.add_grad(x, max_pool2_backward(t.value(x).shape(), t.grad(out), argmax));
                    });
    }

    Id upsample_nearest(Id x, int factor) {
        Tensor<T> y = ::pconv::upsample_nearest(value(x), factor);
        return emit(std::move(y), requires_grad(x), [x, factor, out = next_id()](Tape& t) {
            t.add_grad(x, upsample_nearest_backward(t.value(x).shape(), t.grad(out), factor));
        });
    }

    Id concat_channels(Id a, Id b) {
        Tensor<T> y = ::pconv::concat_channels(value(a), value(b));
        const bool req = requires_grad(a) || requires_grad(b);
        return emit(std::move(y), req, [a, b, out = next_id()](Tape& t) {
            const Tensor<T>& gy = t.grad(out);
            const int ca = t.value(a).c();
            if (t.requires_grad(a)) t.add_grad(a, slice_channels(gy, 0, ca));
            if (t.requires_grad(b)) t.add_grad(b, slice_channels(gy, ca, gy.c() - ca));
        });
    }

    Id add(Id a, Id b) {
        Tensor<T> y = ::pconv::add(value(a), value(b));
        const bool req = requires_grad(a) || requires_grad(b);
        return emit(std::move(y), req, [a, b, out = next_id()](Tape& t) {
            if (t.requires_grad(a)) t.add_grad(a, t.grad(out));
            if (t.requires_grad(b)) t.add_grad(b, t.grad(out));
        });
    }

    Id sub(Id a, Id b) {
        Tensor<T> y = ::pconv::sub(value(a), value(b));
        const bool req = requires_grad(a) || requires_grad(b);
        return emit(std::move(y), req, [a, b, out = next_id()](Tape& t) {
            if (t.requires_grad(a)) t.add_grad(a, t.grad(out));
            if (t.requires_grad(b)) {
                const Tensor<T>& gy = t.grad(out);
                Tensor<T> neg(gy.shape());
                for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -gy[i];
                t.add_grad(b, neg);
            }
        });
    }

    Id mul(Id a, Id b) {
        Tensor<T> y = ::pconv::mul(value(a), value(b));
        const bool req = requires_grad(a) || requires_grad(b);
        return emit(std::move(y), req, [a, b, out = next_id()](Tape& t) {
            const Tensor<T>& gy = t.grad(out);
            if (t.requires_grad(a)) t.add_grad(a, ::pconv::mul(gy, t.value(b)));
            if (t.requires_grad(b)) t.add_grad(b, ::pconv::mul(gy, t.value(a)));
        });
    }

    Id add_const(Id a, Tensor<T> c) {
        Tensor<T> y = ::pconv::add(value(a), c);
        return emit(std::move(y), requires_grad(a), [a, out = next_id()](Tape& t) {
            t.add_grad(a, t.grad(out));
        });
    }

    /// a - c for a constant tensor c.
    Id sub_const(Id a, const Tensor<T>& c) {
        Tensor<T> y = ::pconv::sub(value(a), c);
        return emit(std::move(y), requires_grad(a), [a, out = next_id()](Tape& t) {
            t.add_grad(a, t.grad(out));
        });
    }

    Id mul_const(Id a, Tensor<T> c) {
        Tensor<T> y = ::pconv::mul(value(a), c);
        return emit(std::move(y), requires_grad(a),
                    [a, c = std::move(c), out = next_id()](Tape& t) {
                        t.add_grad(a, ::pconv::mul(t.grad(out), c));
                    });
    }

    Id scale(Id a, T s) {
        Tensor<T> y = ::pconv::scale(value(a), s);
        return emit(std::move(y), requires_grad(a), [a, s, out = next_id()](Tape& t) {
            t.add_grad(a, ::pconv::scale(t.grad(out), s));
        });
    }

    Id sum(Id a) {
        Tensor<T> y = Tensor<T>::scalar(T(::pconv::sum(value(a))));
        return emit(std::move(y), requires_grad(a), [a, out = next_id()](Tape& t) {
            const T g = t.grad(out)[0];
            Tensor<T> gx(t.value(a).shape(), g);
            t.add_grad(a, gx);
        });
    }

    /// Weighted sum of scalar nodes, accumulated in double and rounded once.
    Id weighted_sum(const std::vector<std::pair<Id, double>>& terms) {
        double acc = 0.0;
        bool req = false;
        for (const auto& [id, w] : terms) {
            acc += w * double(value(id).scalar_value());
            req = req || requires_grad(id);
        }
        return emit(Tensor<T>::scalar(T(acc)), req, [terms, out = next_id()](Tape& t) {
            const double g = double(t.grad(out)[0]);
            for (const auto& [id, w] : terms)
                if (t.requires_grad(id)) t.add_grad(id, Tensor<T>::scalar(T(w * g)));
        });
    }

    /// Sum of absolute values. Subgradient at zero is zero.
    Id l1_sum(Id a) {
        Tensor<T> y = Tensor<T>::scalar(T(abs_sum(value(a))));
        return emit(std::move(y), requires_grad(a), [a, out = next_id()](Tape& t) {
            const T g = t.grad(out)[0];
            const Tensor<T>& xv = t.value(a);
            Tensor<T> gx(xv.shape());
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] = xv[i] > T(0) ? g : (xv[i] < T(0) ? -g : T(0));
            t.add_grad(a, gx);
        });
    }

    std::size_t node_count() const { return entries_.size(); }

private:
    /// Id the next emit() will assign; used to bind `out` inside closures
    /// created before the emit happens.
    Id next_id() const { return Id(entries_.size()); }

    struct Entry {
        Tensor<T> value;
        bool requires_grad;
    };

    std::vector<Entry> entries_;
    std::vector<Tensor<T>> grads_;
    std::vector<std::function<void(Tape&)>> ops_;
};

} // namespace pconv
