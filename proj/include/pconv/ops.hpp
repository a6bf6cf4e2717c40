#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pconv/tensor.hpp"

namespace pconv {

// Dense NCHW kernels. Inner products and reductions accumulate in double
// regardless of the storage scalar; loops are plain and deterministic.

enum class ActKind { Relu, LeakyRelu };

inline int conv_out_extent(int in, int pad, int k, int stride) {
    return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                     int stride, int pad) {
    if (w.c() != x.c())
        throw ShapeError("conv2d: channel axis mismatch, input has " + std::to_string(x.c()) +
                         " channels but kernel expects " + std::to_string(w.c()));
    if (w.h() % 2 == 0 || w.w() % 2 == 0)
        throw ShapeError("conv2d: kernel height/width must be odd, got " +
                         std::to_string(w.h()) + "x" + std::to_string(w.w()));
    if (bias.n() != 1 || bias.h() != 1 || bias.w() != 1 || bias.c() != w.n())
        throw ShapeError("conv2d: bias channel axis must be (1," + std::to_string(w.n()) +
                         ",1,1), got " + bias.shape().str());
    if (stride < 1) throw ContractError("conv2d: stride must be positive");
    if (pad < 0) throw ContractError("conv2d: pad must be non-negative");
    if (conv_out_extent(x.h(), pad, w.h(), stride) < 1 ||
        conv_out_extent(x.w(), pad, w.w(), stride) < 1)
        throw ShapeError("conv2d: spatial extents " + std::to_string(x.h()) + "x" +
                         std::to_string(x.w()) + " too small for kernel " +
                         std::to_string(w.h()) + "x" + std::to_string(w.w()) +
                         " with pad " + std::to_string(pad));
}

/// Standard zero-padded convolution (cross-correlation). w is (Cout,Cin,Kh,Kw),
/// bias is a channel vector (1,Cout,1,1).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride, int pad) {
    check_conv_args(x, w, bias, stride, pad);
    const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
    const int Co = w.n(), Kh = w.h(), Kw = w.w();
    const int Ho = conv_out_extent(H, pad, Kh, stride);
    const int Wo = conv_out_extent(W, pad, Kw, stride);
    Tensor<T> y(N, Co, Ho, Wo);
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = 0.0;
                    const int iy0 = oy * stride - pad;
                    const int ix0 = ox * stride - pad;
                    for (int ci = 0; ci < C; ++ci)
                        for (int ky = 0; ky < Kh; ++ky) {
                            const int iy = iy0 + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < Kw; ++kx) {
                                const int ix = ix0 + kx;
                                if (ix < 0 || ix >= W) continue;
                                acc += double(x.at(n, ci, iy, ix)) * double(w.at(co, ci, ky, kx));
                            }
                        }
                    y.at(n, co, oy, ox) = T(acc + double(bias[std::size_t(co)]));
                }
    return y;
}

/// Gradients of conv2d. gy is the upstream gradient at the output shape.
template <typename T>
struct ConvGrads {
    Tensor<T> gx, gw, gb;
};

template <typename T>
Tensor<T> conv2d_backward_bias(const Tensor<T>& gy) {
    std::vector<T> gb(std::size_t(gy.c()), T(0));
    for (int n = 0; n < gy.n(); ++n)
        for (int c = 0; c < gy.c(); ++c) {
            double acc = 0.0;
            for (int y = 0; y < gy.h(); ++y)
                for (int x = 0; x < gy.w(); ++x) acc += double(gy.at(n, c, y, x));
            gb[std::size_t(c)] += T(acc);
        }
    return Tensor<T>::channel_vector(std::move(gb));
}

template <typename T>
Tensor<T> conv2d_backward_weights(const Tensor<T>& x, const Shape& wshape,
                                  const Tensor<T>& gy, int stride, int pad) {
    const int Co = wshape.n, Ci = wshape.c, Kh = wshape.h, Kw = wshape.w;
    Tensor<T> gw(Co, Ci, Kh, Kw);
    for (int co = 0; co < Co; ++co)
        for (int ci = 0; ci < Ci; ++ci)
            for (int ky = 0; ky < Kh; ++ky)
                for (int kx = 0; kx < Kw; ++kx) {
                    double acc = 0.0;
                    for (int n = 0; n < gy.n(); ++n)
                        for (int oy = 0; oy < gy.h(); ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= x.h()) continue;
                            for (int ox = 0; ox < gy.w(); ++ox) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= x.w()) continue;
                                acc += double(gy.at(n, co, oy, ox)) * double(x.at(n, ci, iy, ix));
                            }
                        }
                    gw.at(co, ci, ky, kx) = T(acc);
                }
    return gw;
}

template <typename T>
Tensor<T> conv2d_backward_input(const Shape& xshape, const Tensor<T>& w,
                                const Tensor<T>& gy, int stride, int pad) {
    Tensor<T> gx(xshape);
    const int Co = w.n(), Ci = w.c(), Kh = w.h(), Kw = w.w();
    for (int n = 0; n < gy.n(); ++n)
        for (int co = 0; co < Co; ++co)
            for (int oy = 0; oy < gy.h(); ++oy)
                for (int ox = 0; ox < gy.w(); ++ox) {
                    const T g = gy.at(n, co, oy, ox);
                    if (g == T(0)) continue;
                    const int iy0 = oy * stride - pad;
                    const int ix0 = ox * stride - pad;
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int ky = 0; ky < Kh; ++ky) {
                            const int iy = iy0 + ky;
                            if (iy < 0 || iy >= xshape.h) continue;
                            for (int kx = 0; kx < Kw; ++kx) {
                                const int ix = ix0 + kx;
                                if (ix < 0 || ix >= xshape.w) continue;
                                gx.at(n, ci, iy, ix) += g * w.at(co, ci, ky, kx);
                            }
                        }
                }
    return gx;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                             const Tensor<T>& gy, int stride, int pad) {
    return {conv2d_backward_input(x.shape(), w, gy, stride, pad),
            conv2d_backward_weights(x, w.shape(), gy, stride, pad),
            conv2d_backward_bias(gy)};
}

/// Nearest-neighbour upsampling by an integer factor.
template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor) {
    if (factor < 1) throw ContractError("upsample_nearest: factor must be >= 1");
    if (factor == 1) return x;
    Tensor<T> y(x.n(), x.c(), x.h() * factor, x.w() * factor);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int oy = 0; oy < y.h(); ++oy)
                for (int ox = 0; ox < y.w(); ++ox)
                    y.at(n, c, oy, ox) = x.at(n, c, oy / factor, ox / factor);
    return y;
}

template <typename T>
Tensor<T> upsample_nearest_backward(const Shape& xshape, const Tensor<T>& gy, int factor) {
    Tensor<T> gx(xshape);
    for (int n = 0; n < gy.n(); ++n)
        for (int c = 0; c < gy.c(); ++c)
            for (int oy = 0; oy < gy.h(); ++oy)
                for (int ox = 0; ox < gy.w(); ++ox)
                    gx.at(n, c, oy / factor, ox / factor) += gy.at(n, c, oy, ox);
    return gx;
}

/// 2x2 average pooling; extents must be even.
template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0)
        throw ShapeError("avg_pool2: height/width must be even, got " + x.shape().str());
    Tensor<T> y(x.n(), x.c(), x.h() / 2, x.w() / 2);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int oy = 0; oy < y.h(); ++oy)
                for (int ox = 0; ox < y.w(); ++ox) {
                    double s = double(x.at(n, c, 2 * oy, 2 * ox)) +
                               double(x.at(n, c, 2 * oy, 2 * ox + 1)) +
                               double(x.at(n, c, 2 * oy + 1, 2 * ox)) +
                               double(x.at(n, c, 2 * oy + 1, 2 * ox + 1));
                    y.at(n, c, oy, ox) = T(s / 4.0);
                }
    return y;
}

/// 2x2 max pooling. argmax (linear index into x) is recorded for backward.
template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x, std::vector<std::size_t>* argmax = nullptr) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0)
        throw ShapeError("max_pool2: height/width must be even, got " + x.shape().str());
    Tensor<T> y(x.n(), x.c(), x.h() / 2, x.w() / 2);
    if (argmax) argmax->assign(y.size(), 0);
    std::size_t oi = 0;
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int oy = 0; oy < y.h(); ++oy)
                for (int ox = 0; ox < y.w(); ++ox, ++oi) {
                    T best = x.at(n, c, 2 * oy, 2 * ox);
                    std::size_t bi = x.index(n, c, 2 * oy, 2 * ox);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t i = x.index(n, c, 2 * oy + dy, 2 * ox + dx);
                            if (x[i] > best) {
                                best = x[i];
                                bi = i;
                            }
                        }
                    y[oi] = best;
                    if (argmax) (*argmax)[oi] = bi;
                }
    return y;
}

template <typename T>
Tensor<T> max_pool2_backward(const Shape& xshape, const Tensor<T>& gy,
                             const std::vector<std::size_t>& argmax) {
    Tensor<T> gx(xshape);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax[i]] += gy[i];
    return gx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] < T(0)) y[i] = T(0);
    return y;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    if (!(slope > T(0) && slope < T(1)))
        throw ContractError("leaky_relu: slope must be in (0,1)");
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] < T(0)) y[i] *= slope;
    return y;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, ActKind kind, T slope = T(0.2)) {
    return kind == ActKind::Relu ? relu(x) : leaky_relu(x, slope);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = T(1.0 / (1.0 + std::exp(-double(y[i]))));
    return y;
}

/// Concatenates b after a along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
        throw ShapeError("concat_channels: batch/spatial axes must agree, got " +
                         a.shape().str() + " vs " + b.shape().str());
    Tensor<T> y(a.n(), a.c() + b.c(), a.h(), a.w());
    for (int n = 0; n < a.n(); ++n) {
        for (int c = 0; c < a.c(); ++c)
            for (int yy = 0; yy < a.h(); ++yy)
                for (int xx = 0; xx < a.w(); ++xx)
                    y.at(n, c, yy, xx) = a.at(n, c, yy, xx);
        for (int c = 0; c < b.c(); ++c)
            for (int yy = 0; yy < a.h(); ++yy)
                for (int xx = 0; xx < a.w(); ++xx)
                    y.at(n, a.c() + c, yy, xx) = b.at(n, c, yy, xx);
    }
    return y;
}

/// Extracts channels [c0, c0+count) — the inverse of concat_channels.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int count) {
    if (c0 < 0 || count < 0 || c0 + count > x.c())
        throw ShapeError("slice_channels: channel range [" + std::to_string(c0) + "," +
                         std::to_string(c0 + count) + ") outside 0.." + std::to_string(x.c()));
    Tensor<T> y(x.n(), count, x.h(), x.w());
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < count; ++c)
            for (int yy = 0; yy < x.h(); ++yy)
                for (int xx = 0; xx < x.w(); ++xx)
                    y.at(n, c, yy, xx) = x.at(n, c0 + c, yy, xx);
    return y;
}

enum class BnMode { Train, Eval };

/// Per-channel statistics produced by a train-mode batch_norm call; consumed
/// by the backward pass.
template <typename T>
struct BnCache {
    std::vector<double> mean, inv_std; // one entry per channel
};

/// Batch normalization over the (N,H,W) axes per channel. gamma/beta are
/// channel vectors. In train mode the batch statistics normalize the input
/// and the running statistics are updated in place with momentum; in eval
/// mode the running statistics are used unchanged. Population variance
/// throughout.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps, BnMode mode, Tensor<T>& running_mean, Tensor<T>& running_var,
                     T momentum = T(0.1), BnCache<T>* cache = nullptr) {
    const int C = x.c();
    auto check_vec = [&](const Tensor<T>& v, const char* name) {
        if (v.n() != 1 || v.h() != 1 || v.w() != 1 || v.c() != C)
            throw ShapeError(std::string("batch_norm: ") + name + " channel axis must be (1," +
                             std::to_string(C) + ",1,1), got " + v.shape().str());
    };
    check_vec(gamma, "gamma");
    check_vec(beta, "beta");
    check_vec(running_mean, "running_mean");
    check_vec(running_var, "running_var");

    const std::size_t m = std::size_t(x.n()) * x.h() * x.w();
    Tensor<T> y(x.shape());
    if (cache) {
        cache->mean.assign(std::size_t(C), 0.0);
        cache->inv_std.assign(std::size_t(C), 0.0);
    }
    for (int c = 0; c < C; ++c) {
        double mean, var;
        if (mode == BnMode::Train) {
            if (m == 0) throw ShapeError("batch_norm: empty reduction axis");
            double s = 0.0;
            for (int n = 0; n < x.n(); ++n)
                for (int yy = 0; yy < x.h(); ++yy)
                    for (int xx = 0; xx < x.w(); ++xx) s += double(x.at(n, c, yy, xx));
            mean = s / double(m);
            double sq = 0.0;
            for (int n = 0; n < x.n(); ++n)
                for (int yy = 0; yy < x.h(); ++yy)
                    for (int xx = 0; xx < x.w(); ++xx) {
                        const double d = double(x.at(n, c, yy, xx)) - mean;
                        sq += d * d;
                    }
            var = sq / double(m);
            running_mean[std::size_t(c)] =
                T((1.0 - double(momentum)) * double(running_mean[std::size_t(c)]) +
                  double(momentum) * mean);
            running_var[std::size_t(c)] =
                T((1.0 - double(momentum)) * double(running_var[std::size_t(c)]) +
                  double(momentum) * var);
        } else {
            mean = double(running_mean[std::size_t(c)]);
            var = double(running_var[std::size_t(c)]);
        }
        const double inv_std = 1.0 / std::sqrt(var + double(eps));
        const double g = double(gamma[std::size_t(c)]);
        const double b = double(beta[std::size_t(c)]);
        if (cache) {
            cache->mean[std::size_t(c)] = mean;
            cache->inv_std[std::size_t(c)] = inv_std;
        }
        for (int n = 0; n < x.n(); ++n)
            for (int yy = 0; yy < x.h(); ++yy)
                for (int xx = 0; xx < x.w(); ++xx)
                    y.at(n, c, yy, xx) =
                        T(g * ((double(x.at(n, c, yy, xx)) - mean) * inv_std) + b);
    }
    return y;
}

template <typename T>
struct BnGrads {
    Tensor<T> gx, ggamma, gbeta;
};

/// Backward of train-mode batch_norm (batch statistics participate in the
/// gradient).
template <typename T>
BnGrads<T> batch_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                               const BnCache<T>& cache, const Tensor<T>& gy) {
    const int C = x.c();
    const double m = double(std::size_t(x.n()) * x.h() * x.w());
    BnGrads<T> out{Tensor<T>(x.shape()), Tensor<T>(gamma.shape()), Tensor<T>(gamma.shape())};
    for (int c = 0; c < C; ++c) {
        const double mean = cache.mean[std::size_t(c)];
        const double inv_std = cache.inv_std[std::size_t(c)];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < x.n(); ++n)
            for (int yy = 0; yy < x.h(); ++yy)
                for (int xx = 0; xx < x.w(); ++xx) {
                    const double g = double(gy.at(n, c, yy, xx));
                    const double xh = (double(x.at(n, c, yy, xx)) - mean) * inv_std;
                    sum_g += g;
                    sum_gx += g * xh;
                }
        out.gbeta[std::size_t(c)] = T(sum_g);
        out.ggamma[std::size_t(c)] = T(sum_gx);
        const double gam = double(gamma[std::size_t(c)]);
        for (int n = 0; n < x.n(); ++n)
            for (int yy = 0; yy < x.h(); ++yy)
                for (int xx = 0; xx < x.w(); ++xx) {
                    const double g = double(gy.at(n, c, yy, xx));
                    const double xh = (double(x.at(n, c, yy, xx)) - mean) * inv_std;
                    out.gx.at(n, c, yy, xx) =
                        T(gam * inv_std * (g - sum_g / m - xh * (sum_gx / m)));
                }
    }
    return out;
}

/// Backward of eval-mode batch_norm (running statistics are constants).
template <typename T>
BnGrads<T> batch_norm_eval_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                                    const Tensor<T>& running_mean, const Tensor<T>& running_var,
                                    T eps, const Tensor<T>& gy) {
    const int C = x.c();
    BnGrads<T> out{Tensor<T>(x.shape()), Tensor<T>(gamma.shape()), Tensor<T>(gamma.shape())};
    for (int c = 0; c < C; ++c) {
        const double mean = double(running_mean[std::size_t(c)]);
        const double inv_std = 1.0 / std::sqrt(double(running_var[std::size_t(c)]) + double(eps));
        const double gam = double(gamma[std::size_t(c)]);
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < x.n(); ++n)
            for (int yy = 0; yy < x.h(); ++yy)
                for (int xx = 0; xx < x.w(); ++xx) {
                    const double g = double(gy.at(n, c, yy, xx));
                    sum_g += g;
                    sum_gx += g * (double(x.at(n, c, yy, xx)) - mean) * inv_std;
                    out.gx.at(n, c, yy, xx) = T(g * gam * inv_std);
                }
        out.gbeta[std::size_t(c)] = T(sum_g);
        out.ggamma[std::size_t(c)] = T(sum_gx);
    }
    return out;
}

// Elementwise helpers.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    Tensor<T> y = a;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
    return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    Tensor<T> y = a;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b[i];
    return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    Tensor<T> y = a;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b[i];
    return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> y = a;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= s;
    return y;
}

template <typename T>
double sum(const Tensor<T>& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]);
    return s;
}

template <typename T>
double abs_sum(const Tensor<T>& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(double(a[i]));
    return s;
}

} // namespace pconv
