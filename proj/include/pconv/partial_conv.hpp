#pragma once

#include <string>
#include <vector>

#include "pconv/ops.hpp"
#include "pconv/tensor.hpp"

namespace pconv {

/// A feature tensor paired with its single-channel binary validity mask
/// (1 = valid, 0 = hole). The mask applies to all feature channels.
template <typename T = float>
struct MaskedFeature {
    Tensor<T> features; // (N,C,H,W)
    Tensor<T> mask;     // (N,1,H,W), values exactly 0 or 1
};

template <typename T>
void require_binary_mask(const Tensor<T>& mask, const char* what) {
    if (mask.c() != 1)
        throw ShapeError(std::string(what) + ": mask must have one channel, got " +
                         mask.shape().str());
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] != T(0) && mask[i] != T(1))
            throw ContractError(std::string(what) + ": mask values must be exactly 0 or 1");
}

template <typename T>
void check_masked_feature(const MaskedFeature<T>& mf, const char* what) {
    require_binary_mask(mf.mask, what);
    if (mf.mask.n() != mf.features.n() || mf.mask.h() != mf.features.h() ||
        mf.mask.w() != mf.features.w())
        throw ShapeError(std::string(what) + ": mask extents " + mf.mask.shape().str() +
                         " do not match features " + mf.features.shape().str());
}

/// Number of valid mask pixels in each sliding window. Padded border pixels
/// count as invalid. Output is (N,1,Ho,Wo).
template <typename T>
Tensor<T> mask_window_counts(const Tensor<T>& mask, int kh, int kw, int stride, int pad) {
    const int N = mask.n(), H = mask.h(), W = mask.w();
    const int Ho = conv_out_extent(H, pad, kh, stride);
    const int Wo = conv_out_extent(W, pad, kw, stride);
    Tensor<T> counts(N, 1, Ho, Wo);
    for (int n = 0; n < N; ++n)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                int cnt = 0;
                const int iy0 = oy * stride - pad;
                const int ix0 = ox * stride - pad;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix < 0 || ix >= W) continue;
                        if (mask.at(n, 0, iy, ix) != T(0)) ++cnt;
                    }
                }
                counts.at(n, 0, oy, ox) = T(cnt);
            }
    return counts;
}

/// Mask update: an output pixel is valid when its window saw any valid input.
template <typename T>
Tensor<T> mask_update(const Tensor<T>& mask, int kh, int kw, int stride, int pad) {
    Tensor<T> counts = mask_window_counts(mask, kh, kw, stride, pad);
    for (std::size_t i = 0; i < counts.size(); ++i)
        counts[i] = counts[i] > T(0) ? T(1) : T(0);
    return counts;
}

/// Partial convolution. At each output position with v > 0 valid pixels in
/// the window, the output is the masked windowed dot product rescaled by
/// (Kh*Kw)/v, plus bias; fully masked windows produce exactly 0 with no
/// bias. The renormalization uses the full kernel footprint even at the
/// borders, where out-of-image pixels count as invalid. The returned mask
/// follows the mask update rule.
template <typename T>
MaskedFeature<T> pconv_forward(const MaskedFeature<T>& in, const Tensor<T>& w,
                               const Tensor<T>& bias, int stride, int pad,
                               const Tensor<T>* precomputed_counts = nullptr) {
    check_masked_feature(in, "pconv_forward");
    check_conv_args(in.features, w, bias, stride, pad);
    const Tensor<T>& x = in.features;
    const Tensor<T>& m = in.mask;
    const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
    const int Co = w.n(), Kh = w.h(), Kw = w.w();
    const int Ho = conv_out_extent(H, pad, Kh, stride);
    const int Wo = conv_out_extent(W, pad, Kw, stride);
    const double window = double(Kh) * double(Kw);

    Tensor<T> counts =
        precomputed_counts ? *precomputed_counts : mask_window_counts(m, Kh, Kw, stride, pad);
    Tensor<T> y(N, Co, Ho, Wo);
    Tensor<T> mout(N, 1, Ho, Wo);
    for (int n = 0; n < N; ++n) {
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox)
                mout.at(n, 0, oy, ox) = counts.at(n, 0, oy, ox) > T(0) ? T(1) : T(0);
        for (int co = 0; co < Co; ++co)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    const double v = double(counts.at(n, 0, oy, ox));
                    if (v <= 0.0) {
                        y.at(n, co, oy, ox) = T(0);
                        continue;
                    }
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
                                if (m.at(n, 0, iy, ix) == T(0)) continue;
                                acc += double(x.at(n, ci, iy, ix)) * double(w.at(co, ci, ky, kx));
                            }
                        }
                    // Multiply before dividing so the integer case
                    // (acc = v, window = Kh*Kw) renormalizes exactly.
                    y.at(n, co, oy, ox) = T(acc * window / v + double(bias[std::size_t(co)]));
                }
    }
    return {std::move(y), std::move(mout)};
}

template <typename T>
struct PconvGrads {
    Tensor<T> gx, gw, gb;
};

/// Gradients of pconv_forward with the mask held constant. Feature gradients
/// are exactly zero at hole positions.
template <typename T>
PconvGrads<T> pconv_backward(const MaskedFeature<T>& in, const Tensor<T>& w,
                             const Tensor<T>& gy, int stride, int pad) {
    const Tensor<T>& x = in.features;
    const Tensor<T>& m = in.mask;
    const int Kh = w.h(), Kw = w.w();
    const double window = double(Kh) * double(Kw);
    Tensor<T> counts = mask_window_counts(m, Kh, Kw, stride, pad);

    // Fold the per-position renormalization into the upstream gradient, then
    // reuse the standard convolution backward on the masked input.
    Tensor<T> gy_scaled = gy;
    Tensor<T> gb(1, w.n(), 1, 1);
    for (int n = 0; n < gy.n(); ++n)
        for (int co = 0; co < gy.c(); ++co)
            for (int oy = 0; oy < gy.h(); ++oy)
                for (int ox = 0; ox < gy.w(); ++ox) {
                    const double v = double(counts.at(n, 0, oy, ox));
                    if (v <= 0.0) {
                        gy_scaled.at(n, co, oy, ox) = T(0);
                    } else {
                        gy_scaled.at(n, co, oy, ox) =
                            T(double(gy.at(n, co, oy, ox)) * window / v);
                        gb[std::size_t(co)] += gy.at(n, co, oy, ox);
                    }
                }

    Tensor<T> xm = x;
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int yy = 0; yy < x.h(); ++yy)
                for (int xx = 0; xx < x.w(); ++xx)
                    if (m.at(n, 0, yy, xx) == T(0)) xm.at(n, c, yy, xx) = T(0);

    Tensor<T> gw = conv2d_backward_weights(xm, w.shape(), gy_scaled, stride, pad);
    Tensor<T> gx = conv2d_backward_input(x.shape(), w, gy_scaled, stride, pad);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int yy = 0; yy < x.h(); ++yy)
                for (int xx = 0; xx < x.w(); ++xx)
                    if (m.at(n, 0, yy, xx) == T(0)) gx.at(n, c, yy, xx) = T(0);
    return {std::move(gx), std::move(gw), std::move(gb)};
}

struct LayerSpec {
    int kernel = 3;
    int stride = 1;
    int pad = 1;
};

/// Applies the mask update through a stack of layers and returns the mask
/// after each one. With stride 1 this dilates the valid region by the kernel
/// footprint at every layer, so holes shrink until they vanish.
template <typename T>
std::vector<Tensor<T>> propagate_mask_chain(const Tensor<T>& initial_mask,
                                            const std::vector<LayerSpec>& layers) {
    require_binary_mask(initial_mask, "propagate_mask_chain");
    std::vector<Tensor<T>> out;
    out.reserve(layers.size());
    Tensor<T> m = initial_mask;
    for (const LayerSpec& l : layers) {
        m = mask_update(m, l.kernel, l.kernel, l.stride, l.pad);
        out.push_back(m);
    }
    return out;
}

template <typename T>
std::size_t count_valid(const Tensor<T>& mask) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] != T(0)) ++n;
    return n;
}

} // namespace pconv
