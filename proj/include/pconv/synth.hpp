#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pconv/image.hpp"
#include "pconv/rng.hpp"

namespace pconv {

namespace detail {

/// Rasterizes an axis-aligned ellipse into the grid, clipped to a 1-px
/// border margin so generated regions never touch the image edge.
inline void rasterize_ellipse(std::vector<std::uint8_t>& grid, int w, int h, double cx,
                              double cy, double rx, double ry) {
    const int x0 = std::max(1, int(std::floor(cx - rx)));
    const int x1 = std::min(w - 2, int(std::ceil(cx + rx)));
    const int y0 = std::max(1, int(std::floor(cy - ry)));
    const int y1 = std::min(h - 2, int(std::ceil(cy + ry)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = (x - cx) / rx, dy = (y - cy) / ry;
            if (dx * dx + dy * dy <= 1.0) grid[std::size_t(y) * w + x] = 1;
        }
}

/// Connected blob from a random walk of overlapping ellipses. Returns the
/// covered fraction; 1 marks blob pixels.
inline double grow_blob(std::vector<std::uint8_t>& grid, int w, int h, Rng& rng,
                        double target_fraction) {
    std::fill(grid.begin(), grid.end(), 0);
    const double r_lo = 2.0;
    const double r_hi = std::max(3.0, std::min(w, h) / 10.0);
    double cx = rng.uniform(r_hi, w - 1 - r_hi);
    double cy = rng.uniform(r_hi, h - 1 - r_hi);
    const std::size_t total = std::size_t(w) * h;
    std::size_t covered = 0;
    for (int e = 0; e < 4 * std::max(w, h); ++e) {
        const double rx = rng.uniform(r_lo, r_hi);
        const double ry = rng.uniform(r_lo, r_hi);
        rasterize_ellipse(grid, w, h, cx, cy, rx, ry);
        covered = 0;
        for (auto g : grid) covered += g;
        if (double(covered) / double(total) >= target_fraction) break;
        // Step within the current ellipse so the union stays connected.
        const double ang = rng.uniform(0.0, 6.283185307179586);
        const double step = 0.7 * std::min(rx, ry);
        cx = std::clamp(cx + step * std::cos(ang), r_lo + 1.0, double(w) - r_lo - 2.0);
        cy = std::clamp(cy + step * std::sin(ang), r_lo + 1.0, double(h) - r_lo - 2.0);
    }
    return double(covered) / double(total);
}

/// Band-limited field: a few bilinearly upsampled white-noise octaves.
inline std::vector<float> noise_field(int w, int h, Rng& rng) {
    std::vector<double> acc(std::size_t(w) * h, 0.0);
    const double weights[3] = {1.0, 0.35, 0.12};
    for (int oct = 0; oct < 3; ++oct) {
        const int gw = std::max(2, (w >> (3 - oct)));
        const int gh = std::max(2, (h >> (3 - oct)));
        std::vector<double> grid(std::size_t(gw) * gh);
        for (auto& g : grid) g = rng.uniform(-1.0, 1.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double u = (x + 0.5) * gw / w - 0.5;
                const double v = (y + 0.5) * gh / h - 0.5;
                const int x0 = std::clamp(int(std::floor(u)), 0, gw - 1);
                const int y0 = std::clamp(int(std::floor(v)), 0, gh - 1);
                const int x1 = std::min(x0 + 1, gw - 1);
                const int y1 = std::min(y0 + 1, gh - 1);
                const double fu = std::clamp(u - x0, 0.0, 1.0);
                const double fv = std::clamp(v - y0, 0.0, 1.0);
                const double g00 = grid[std::size_t(y0) * gw + x0];
                const double g01 = grid[std::size_t(y0) * gw + x1];
                const double g10 = grid[std::size_t(y1) * gw + x0];
                const double g11 = grid[std::size_t(y1) * gw + x1];
                const double val = (g00 * (1 - fu) + g01 * fu) * (1 - fv) +
                                   (g10 * (1 - fu) + g11 * fu) * fv;
                acc[std::size_t(y) * w + x] += weights[oct] * val;
            }
    }
    const auto [mn, mx] = std::minmax_element(acc.begin(), acc.end());
    const double span = *mx - *mn;
    std::vector<float> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i)
        out[i] = span > 1e-12 ? float((acc[i] - *mn) / span) : 0.5f;
    return out;
}

} // namespace detail

/// Simulated hole masks: each hole is one connected blob of overlapping
/// ellipses with a hole fraction inside [coverage_lo, coverage_hi] and a
/// 1-px clear border. Deterministic per seed.
inline std::vector<BinaryMask> synthesize_masks(std::uint64_t seed, int width, int height,
                                                int count, double coverage_lo = 0.05,
                                                double coverage_hi = 0.25) {
    if (!(coverage_lo > 0.0 && coverage_hi < 0.5 && coverage_lo < coverage_hi))
        throw ContractError("synthesize_masks: coverage range must satisfy 0 < lo < hi < 0.5");
    Rng rng(seed, 0x3A5C);
    std::vector<BinaryMask> out;
    out.reserve(std::size_t(count));
    std::vector<std::uint8_t> blob(std::size_t(width) * height);
    for (int i = 0; i < count; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
            // Aim below the ceiling; the last ellipse can overshoot a bit.
            const double target =
                rng.uniform(coverage_lo + 0.05 * (coverage_hi - coverage_lo),
                            coverage_lo + 0.70 * (coverage_hi - coverage_lo));
            const double got = detail::grow_blob(blob, width, height, rng, target);
            ok = got >= coverage_lo && got <= coverage_hi;
        }
        if (!ok)
            throw GenerationError("synthesize_masks: could not hit coverage [" +
                                  std::to_string(coverage_lo) + ", " +
                                  std::to_string(coverage_hi) + "] on a " +
                                  std::to_string(width) + "x" + std::to_string(height) +
                                  " grid after 64 attempts");
        BinaryMask m{width, height, {}};
        m.v.resize(blob.size());
        for (std::size_t k = 0; k < blob.size(); ++k) m.v[k] = blob[k] ? 0 : 1; // blob = hole
        out.push_back(std::move(m));
    }
    return out;
}

/// Smooth band-limited random textures in [0,1]; stand-ins for anatomy at
/// desk scale. Deterministic per seed.
inline std::vector<GrayImage> synthesize_textures(std::uint64_t seed, int size, int count) {
    Rng rng(seed, 0x7E47);
    std::vector<GrayImage> out;
    out.reserve(std::size_t(count));
    for (int i = 0; i < count; ++i)
        out.push_back(GrayImage{size, size, detail::noise_field(size, size, rng), 255});
    return out;
}

struct BlobSample {
    GrayImage image;
    LabelMap label; // 1 on the blob, 0 elsewhere
};

/// Bright smooth shapes on a darker textured background, paired with their
/// binary label maps. Label fraction lands in roughly [0.05, 0.25].
inline std::vector<BlobSample> synthesize_blobs(std::uint64_t seed, int size, int count) {
    Rng rng(seed, 0xB10B);
    std::vector<BlobSample> out;
    out.reserve(std::size_t(count));
    std::vector<std::uint8_t> blob(std::size_t(size) * size);
    for (int i = 0; i < count; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
            const double got = detail::grow_blob(blob, size, size, rng, rng.uniform(0.08, 0.18));
            ok = got >= 0.05 && got <= 0.25;
        }
        if (!ok) throw GenerationError("synthesize_blobs: could not reach the target fraction");

        std::vector<float> noise = detail::noise_field(size, size, rng);
        std::vector<float> img(blob.size());
        for (std::size_t k = 0; k < blob.size(); ++k)
            img[k] = blob[k] ? 0.72f + 0.18f * noise[k] : 0.08f + 0.30f * noise[k];
        // One 3x3 box blur softens the boundary.
        std::vector<float> blurred(img.size());
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double s = 0.0;
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= size || xx < 0 || xx >= size) continue;
                        s += img[std::size_t(yy) * size + xx];
                        ++n;
                    }
                blurred[std::size_t(y) * size + x] =
                    std::clamp(float(s / n), 0.0f, 1.0f);
            }
        BlobSample sample;
        sample.image = GrayImage{size, size, std::move(blurred), 255};
        sample.label = LabelMap{size, size, {}};
        sample.label.v.resize(blob.size());
        for (std::size_t k = 0; k < blob.size(); ++k) sample.label.v[k] = blob[k] ? 1 : 0;
        out.push_back(std::move(sample));
    }
    return out;
}

} // namespace pconv
