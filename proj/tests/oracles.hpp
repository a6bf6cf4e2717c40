#pragma once

// Naive reference implementations used only by tests. These deliberately
// avoid the library kernels: straight loops, no shared helpers, so they stay
// an independent check on the production code paths.

#include <cmath>
#include <cstddef>
#include <vector>

#include "pconv/image.hpp"
#include "pconv/tensor.hpp"

namespace oracles {

using pconv::BinaryMask;
using pconv::GrayImage;
using pconv::Tensor;

/// Quintuple-loop direct convolution with zero padding.
template <typename T>
Tensor<T> conv2d_naive(const Tensor<T>& x, const Tensor<T>& w, const std::vector<T>& bias,
                       int stride, int pad) {
    const int N = x.n(), Ci = x.c(), H = x.h(), W = x.w();
    const int Co = w.n(), Kh = w.h(), Kw = w.w();
    const int Ho = (H + 2 * pad - Kh) / stride + 1;
    const int Wo = (W + 2 * pad - Kw) / stride + 1;
    Tensor<T> y(N, Co, Ho, Wo);
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = double(bias[std::size_t(co)]);
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int ky = 0; ky < Kh; ++ky)
                            for (int kx = 0; kx < Kw; ++kx) {
                                const int iy = oy * stride - pad + ky;
                                const int ix = ox * stride - pad + kx;
                                double xv = 0.0;
                                if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    xv = double(x.at(n, ci, iy, ix));
                                acc += xv * double(w.at(co, ci, ky, kx));
                            }
                    y.at(n, co, oy, ox) = T(acc);
                }
    return y;
}

/// Double-loop channel inner products, normalized by C*H*W.
template <typename T>
std::vector<std::vector<double>> gram_naive(const Tensor<T>& psi, int batch_item) {
    const int C = psi.c(), H = psi.h(), W = psi.w();
    std::vector<std::vector<double>> g(std::size_t(C), std::vector<double>(std::size_t(C), 0.0));
    for (int a = 0; a < C; ++a)
        for (int b = 0; b < C; ++b) {
            double acc = 0.0;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    acc += double(psi.at(batch_item, a, y, x)) *
                           double(psi.at(batch_item, b, y, x));
            g[std::size_t(a)][std::size_t(b)] = acc / (double(C) * H * W);
        }
    return g;
}

/// Elementwise binary cross entropy with clamping.
template <typename T>
double bce_naive(const Tensor<T>& pred, const Tensor<T>& target, double eps = 1e-7) {
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = double(pred[i]);
        if (p < eps) p = eps;
        if (p > 1.0 - eps) p = 1.0 - eps;
        const double t = double(target[i]);
        s -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    return s / double(pred.size());
}

struct MeanStd {
    double mean = 0.0, std_dev = 0.0;
};

/// Filtered-loop mean and population std over pixels with mask 1 (or all).
inline MeanStd filtered_mean_std(const GrayImage& img, const BinaryMask* mask) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (mask && mask->v[i] == 0) continue;
        sum += img.v[i];
        ++n;
    }
    const double mean = sum / double(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (mask && mask->v[i] == 0) continue;
        sq += (img.v[i] - mean) * (img.v[i] - mean);
    }
    return {mean, std::sqrt(sq / double(n))};
}

/// PSNR computed on explicitly extracted pixel vectors.
inline double psnr_on_vectors(const GrayImage& a, const GrayImage& b, double peak,
                              const BinaryMask* region) {
    std::vector<double> va, vb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (region && region->v[i] == 0) continue;
        va.push_back(a.v[i]);
        vb.push_back(b.v[i]);
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) mse += (va[i] - vb[i]) * (va[i] - vb[i]);
    mse /= double(va.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

/// Mean |a-b| over the whole image (used for the l_masked + l_valid
/// partition identity).
template <typename T>
double whole_image_mae(const Tensor<T>& a, const Tensor<T>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(double(a[i]) - double(b[i]));
    return s / double(a.size());
}

} // namespace oracles
