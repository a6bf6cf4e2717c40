#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "pconv/image.hpp"

namespace pconv {

/// One evaluated metric. region tells which pixels took part: the whole
/// image or one side of a mask.
struct MetricReport {
    std::string sample;
    std::string metric;
    std::string region = "whole";
    double value = 0.0;

    std::string format_value() const {
        if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6g", value);
        return buf;
    }

    std::string line() const { return sample + "\t" + metric + "\t" + region + "\t" + format_value(); }
};

namespace detail {

inline void check_metric_extents(const GrayImage& a, const GrayImage& b,
                                 const BinaryMask* region, const char* what) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError(std::string(what) + ": image extents differ, " +
                         std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                         std::to_string(b.width) + "x" + std::to_string(b.height));
    if (region && (region->width != a.width || region->height != a.height))
        throw ShapeError(std::string(what) + ": region mask extents do not match the images");
}

} // namespace detail

/// Peak signal-to-noise ratio in decibels over the selected pixels (region
/// value 1 = included; null = all). Identical inputs report +infinity.
inline double psnr(const GrayImage& a, const GrayImage& b, double peak = 1.0,
                   const BinaryMask* region = nullptr) {
    detail::check_metric_extents(a, b, region, "psnr");
    if (!(peak > 0.0)) throw ContractError("psnr: peak must be positive");
    double mse = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (region && region->v[i] == 0) continue;
        const double d = double(a.v[i]) - double(b.v[i]);
        mse += d * d;
        ++n;
    }
    if (n == 0) throw ContractError("psnr: selected region is empty");
    mse /= double(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 1.0; // dynamic range
};

/// Mean structural similarity over sliding Gaussian windows (the standard
/// 11-tap, sigma 1.5 formulation). Windows must fit inside the image; with
/// a region mask, only windows fully inside the region are averaged.
inline double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& p = {},
                   const BinaryMask* region = nullptr) {
    detail::check_metric_extents(a, b, region, "ssim");
    const int win = p.window;
    if (a.width < win || a.height < win)
        throw ShapeError("ssim: image " + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " is smaller than the " +
                         std::to_string(win) + "-tap window");

    std::vector<double> w(std::size_t(win) * win);
    {
        const double c = (win - 1) / 2.0;
        double total = 0.0;
        for (int y = 0; y < win; ++y)
            for (int x = 0; x < win; ++x) {
                const double d2 = (x - c) * (x - c) + (y - c) * (y - c);
                const double g = std::exp(-d2 / (2.0 * p.sigma * p.sigma));
                w[std::size_t(y) * win + x] = g;
                total += g;
            }
        for (auto& g : w) g /= total;
    }

    const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
    const double c2 = (p.k2 * p.peak) * (p.k2 * p.peak);
    double acc = 0.0;
    std::size_t windows = 0;
    for (int y0 = 0; y0 + win <= a.height; ++y0)
        for (int x0 = 0; x0 + win <= a.width; ++x0) {
            if (region) {
                bool inside = true;
                for (int y = y0; y < y0 + win && inside; ++y)
                    for (int x = x0; x < x0 + win; ++x)
                        if (region->at(y, x) == 0) {
                            inside = false;
                            break;
                        }
                if (!inside) continue;
            }
            double mu_a = 0, mu_b = 0;
            for (int y = 0; y < win; ++y)
                for (int x = 0; x < win; ++x) {
                    const double wt = w[std::size_t(y) * win + x];
                    mu_a += wt * a.at(y0 + y, x0 + x);
                    mu_b += wt * b.at(y0 + y, x0 + x);
                }
            double var_a = 0, var_b = 0, cov = 0;
            for (int y = 0; y < win; ++y)
                for (int x = 0; x < win; ++x) {
                    const double wt = w[std::size_t(y) * win + x];
                    const double da = a.at(y0 + y, x0 + x) - mu_a;
                    const double db = b.at(y0 + y, x0 + x) - mu_b;
                    var_a += wt * da * da;
                    var_b += wt * db * db;
                    cov += wt * da * db;
                }
            acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            ++windows;
        }
    if (windows == 0) throw ContractError("ssim: no window fits inside the selected region");
    return acc / double(windows);
}

/// Dice overlap 2|A∩B| / (|A|+|B|) for one label, optionally restricted to
/// pixels where the exclusion mask is 1 (pass the validity mask to score
/// outside the removed region). Both regions empty counts as agreement 1.
inline double dice(const LabelMap& a, const LabelMap& b, int label,
                   const BinaryMask* exclusion = nullptr) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("dice: label map extents differ");
    if (exclusion && (exclusion->width != a.width || exclusion->height != a.height))
        throw ShapeError("dice: exclusion mask extents do not match the label maps");
    std::size_t na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (exclusion && exclusion->v[i] == 0) continue;
        const bool ia = int(a.v[i]) == label;
        const bool ib = int(b.v[i]) == label;
        na += ia;
        nb += ib;
        inter += ia && ib;
    }
    if (na + nb == 0) return 1.0; // vacuous agreement convention
    return 2.0 * double(inter) / double(na + nb);
}

} // namespace pconv
