#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "pconv/image.hpp"
#include "pconv/tensor.hpp"

namespace pconv {

namespace detail {

constexpr int kHistBins = 256;

inline std::array<double, kHistBins> histogram256(const GrayImage& img) {
    std::array<double, kHistBins> h{};
    for (float x : img.v) {
        int b = int(std::floor(double(x) * kHistBins));
        b = std::clamp(b, 0, kHistBins - 1);
        h[std::size_t(b)] += 1.0;
    }
    for (auto& x : h) x /= double(img.size());
    return h;
}

/// Piecewise-linear CDF evaluated at intensity v in [0,1].
inline double cdf_at(const std::array<double, kHistBins>& hist,
                     const std::array<double, kHistBins>& cum, double v) {
    double pos = v * kHistBins;
    int b = std::clamp(int(std::floor(pos)), 0, kHistBins - 1);
    const double frac = std::clamp(pos - b, 0.0, 1.0);
    const double below = b > 0 ? cum[std::size_t(b - 1)] : 0.0;
    return below + frac * hist[std::size_t(b)];
}

/// Inverse of the piecewise-linear CDF: intensity whose CDF equals u.
inline double cdf_inverse(const std::array<double, kHistBins>& hist,
                          const std::array<double, kHistBins>& cum, double u) {
    u = std::clamp(u, 0.0, 1.0);
    int b = 0;
    while (b < kHistBins - 1 && (cum[std::size_t(b)] < u || hist[std::size_t(b)] == 0.0)) ++b;
    const double below = b > 0 ? cum[std::size_t(b - 1)] : 0.0;
    const double mass = hist[std::size_t(b)];
    const double frac = mass > 0.0 ? std::clamp((u - below) / mass, 0.0, 1.0) : 0.0;
    return (double(b) + frac) / kHistBins;
}

} // namespace detail

/// Monotone intensity remapping that drives the source's 256-bin empirical
/// CDF onto the reference's, with linear interpolation inside bins.
inline GrayImage histogram_match(const GrayImage& src, const GrayImage& reference) {
    if (src.size() == 0 || reference.size() == 0)
        throw ContractError("histogram_match: images must be nonempty");
    const float ref_min = *std::min_element(reference.v.begin(), reference.v.end());
    const float ref_max = *std::max_element(reference.v.begin(), reference.v.end());
    if (ref_min == ref_max)
        throw DegenerateError("histogram_match: reference image is constant");

    const auto src_hist = detail::histogram256(src);
    const auto ref_hist = detail::histogram256(reference);
    std::array<double, detail::kHistBins> src_cum{}, ref_cum{};
    double a = 0, b = 0;
    for (int i = 0; i < detail::kHistBins; ++i) {
        a += src_hist[std::size_t(i)];
        b += ref_hist[std::size_t(i)];
        src_cum[std::size_t(i)] = a;
        ref_cum[std::size_t(i)] = b;
    }

    GrayImage out = src;
    for (auto& x : out.v) {
        const double u = detail::cdf_at(src_hist, src_cum, double(x));
        x = float(detail::cdf_inverse(ref_hist, ref_cum, u));
    }
    return out;
}

/// Affine parameters removed by z-scoring; apply() undoes the normalization.
struct ZScoreStats {
    double mean = 0;
    double std_dev = 0; // population standard deviation

    double invert(double z) const { return z * std_dev + mean; }
};

/// Standardizes the image to mean 0, population std 1 over the considered
/// pixels (all pixels, or those with mask 1). The output lives in a plain
/// tensor because standardized values leave [0,1].
inline std::pair<Tensor<float>, ZScoreStats> zscore_normalize(const GrayImage& img,
                                                              const BinaryMask* mask = nullptr) {
    if (mask && (mask->width != img.width || mask->height != img.height))
        throw ShapeError("zscore_normalize: mask extents do not match image");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (mask && mask->v[i] == 0) continue;
        sum += double(img.v[i]);
        ++n;
    }
    if (n < 2) throw DegenerateError("zscore_normalize: fewer than 2 pixels considered");
    const double mean = sum / double(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (mask && mask->v[i] == 0) continue;
        const double d = double(img.v[i]) - mean;
        sq += d * d;
    }
    const double var = sq / double(n);
    if (var <= 0.0) throw DegenerateError("zscore_normalize: zero variance");
    const double std_dev = std::sqrt(var);

    Tensor<float> out(1, 1, img.height, img.width);
    for (std::size_t i = 0; i < img.size(); ++i)
        out[i] = float((double(img.v[i]) - mean) / std_dev);
    return {std::move(out), ZScoreStats{mean, std_dev}};
}

template <typename T>
std::pair<Tensor<T>, ZScoreStats> zscore_normalize(const Tensor<T>& t,
                                                   const Tensor<T>* mask = nullptr) {
    if (mask) require_same_shape(t, *mask, "zscore_normalize");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (mask && (*mask)[i] == T(0)) continue;
        sum += double(t[i]);
        ++n;
    }
    if (n < 2) throw DegenerateError("zscore_normalize: fewer than 2 elements considered");
    const double mean = sum / double(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (mask && (*mask)[i] == T(0)) continue;
        const double d = double(t[i]) - mean;
        sq += d * d;
    }
    const double var = sq / double(n);
    if (var <= 0.0) throw DegenerateError("zscore_normalize: zero variance");
    const double std_dev = std::sqrt(var);
    Tensor<T> out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = T((double(t[i]) - mean) / std_dev);
    return {std::move(out), ZScoreStats{mean, std_dev}};
}

enum class MaskRegion { Hole, Valid };

/// Grows the selected region by a square structuring element of side
/// 2*radius+1; the complementary region shrinks. radius 0 is the identity.
inline BinaryMask dilate(const BinaryMask& mask, int radius_px, MaskRegion region) {
    if (radius_px < 0) throw ContractError("dilate: radius must be >= 0");
    if (radius_px == 0) return mask;
    const int w = mask.width, h = mask.height;
    // Growing the hole region (0s) is erosion of the 1s; both reduce to a
    // separable sliding min/max over the square footprint.
    const bool grow_ones = region == MaskRegion::Valid;
    BinaryMask tmp = mask, out = mask;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::uint8_t acc = grow_ones ? 0 : 1;
            for (int d = -radius_px; d <= radius_px; ++d) {
                const int xx = x + d;
                if (xx < 0 || xx >= w) continue;
                const std::uint8_t v = mask.at(y, xx);
                acc = grow_ones ? std::max(acc, v) : std::min(acc, v);
            }
            tmp.at(y, x) = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::uint8_t acc = grow_ones ? 0 : 1;
            for (int d = -radius_px; d <= radius_px; ++d) {
                const int yy = y + d;
                if (yy < 0 || yy >= h) continue;
                const std::uint8_t v = tmp.at(yy, x);
                acc = grow_ones ? std::max(acc, v) : std::min(acc, v);
            }
            out.at(y, x) = acc;
        }
    return out;
}

} // namespace pconv
