#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pconv/autograd.hpp"
#include "pconv/io_binary.hpp"
#include "pconv/ops.hpp"
#include "pconv/rng.hpp"
#include "pconv/tensor.hpp"

namespace pconv {

/// Ordered activation maps of the frozen extractor, finest level first.
template <typename T = float>
struct FeaturePyramid {
    std::vector<Tensor<T>> levels;
};

/// Frozen 3-level convolution pyramid used by the perceptual and style
/// losses: 3x3 kernels, stride 2, ReLU, channels 8 -> 16 -> 32 on a
/// single-channel input. The weights are drawn once from a seeded
/// orthogonalized Gaussian initialization and never trained, so every loss
/// value is reproducible bit for bit. `.pcfx` files carry the same tensors
/// for interchange.
template <typename T = float>
class FeatureExtractor {
public:
    static constexpr int kLevels = 3;
    static constexpr std::uint64_t kDefaultSeed = 0x50434658u; // "PCFX"

    static FeatureExtractor make_default() { return make_seeded(kDefaultSeed); }

    static FeatureExtractor make_seeded(std::uint64_t seed) {
        FeatureExtractor fx;
        Rng rng(seed, 0);
        const int channels[kLevels + 1] = {1, 8, 16, 32};
        for (int l = 0; l < kLevels; ++l) {
            const int co = channels[l + 1], ci = channels[l];
            const int fan_in = ci * 9;
            // Orthogonalized Gaussian rows scaled by sqrt(2), so feature
            // magnitudes stay comparable across levels despite the ReLUs.
            std::vector<std::vector<double>> rows;
            rows.resize(std::size_t(co), std::vector<double>(std::size_t(fan_in)));
            for (auto& r : rows)
                for (auto& x : r) x = rng.normal();
            for (int i = 0; i < co; ++i) {
                for (int j = 0; j < i; ++j) {
                    double dot = 0.0;
                    for (int k = 0; k < fan_in; ++k) dot += rows[i][k] * rows[j][k];
                    for (int k = 0; k < fan_in; ++k) rows[i][k] -= dot * rows[j][k];
                }
                double norm = 0.0;
                for (int k = 0; k < fan_in; ++k) norm += rows[i][k] * rows[i][k];
                norm = std::sqrt(norm);
                if (norm < 1e-12) norm = 1.0;
                for (int k = 0; k < fan_in; ++k) rows[i][k] /= norm;
            }
            const double gain = std::sqrt(2.0);
            std::vector<float> wv;
            wv.reserve(std::size_t(co) * fan_in);
            for (int i = 0; i < co; ++i)
                for (int k = 0; k < fan_in; ++k) wv.push_back(float(gain * rows[i][k]));
            std::vector<float> bv(static_cast<std::size_t>(co));
            for (auto& b : bv) b = float(0.05 * rng.normal());

            // Canonical values are binary32; promote afterwards so every
            // scalar type sees identical numbers.
            Tensor<float> wf = Tensor<float>::from_values(co, ci, 3, 3, std::move(wv));
            Tensor<float> bf = Tensor<float>::channel_vector(std::move(bv));
            fx.weights_.push_back(wf.template cast<T>());
            fx.biases_.push_back(bf.template cast<T>());
        }
        return fx;
    }

    int levels() const { return kLevels; }
    const Tensor<T>& weight(int l) const { return weights_[std::size_t(l)]; }
    const Tensor<T>& bias(int l) const { return biases_[std::size_t(l)]; }

    void check_input(const Tensor<T>& image) const {
        if (image.c() != weights_[0].c())
            throw ShapeError("extract_features: channel axis must be " +
                             std::to_string(weights_[0].c()) + ", got " +
                             std::to_string(image.c()));
        const int div = 1 << kLevels;
        if (image.h() % div != 0 || image.w() % div != 0)
            throw ShapeError("extract_features: height/width must be divisible by " +
                             std::to_string(div) + ", got " + std::to_string(image.h()) +
                             "x" + std::to_string(image.w()));
    }

    FeaturePyramid<T> extract(const Tensor<T>& image) const {
        check_input(image);
        FeaturePyramid<T> pyr;
        Tensor<T> x = image;
        for (int l = 0; l < kLevels; ++l) {
            x = relu(conv2d(x, weights_[std::size_t(l)], biases_[std::size_t(l)], 2, 1));
            pyr.levels.push_back(x);
        }
        return pyr;
    }

    /// Tape variant; the extractor weights enter as constants so gradients
    /// flow to the image only.
    std::vector<typename Tape<T>::Id> extract_on_tape(Tape<T>& tape,
                                                      typename Tape<T>::Id image) const {
        check_input(tape.value(image));
        std::vector<typename Tape<T>::Id> ids;
        typename Tape<T>::Id x = image;
        for (int l = 0; l < kLevels; ++l) {
            auto w = tape.constant(weights_[std::size_t(l)]);
            auto b = tape.constant(biases_[std::size_t(l)]);
            x = tape.relu(tape.conv2d(x, w, b, 2, 1));
            ids.push_back(x);
        }
        return ids;
    }

    bool operator==(const FeatureExtractor& o) const {
        for (int l = 0; l < kLevels; ++l)
            if (weights_[std::size_t(l)].values() != o.weights_[std::size_t(l)].values() ||
                biases_[std::size_t(l)].values() != o.biases_[std::size_t(l)].values())
                return false;
        return true;
    }

    // ---- .pcfx interchange: magic "PCFX", version u32, then per tensor
    // rank u32, extents u32[rank], values f32[], in layer order w0,b0,w1,... ----

    void save_pcfx(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot open '" + path + "' for writing");
        write_magic(os, "PCFX");
        write_u32(os, 1);
        for (int l = 0; l < kLevels; ++l) {
            write_pcfx_tensor(os, weights_[std::size_t(l)], 4);
            write_pcfx_tensor(os, biases_[std::size_t(l)], 1);
        }
        if (!os) throw IoError("write failure on '" + path + "'");
    }

    static FeatureExtractor load_pcfx(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IoError("cannot open '" + path + "' for reading");
        expect_magic(is, "PCFX", path.c_str());
        const std::uint32_t version = read_u32(is, "pcfx version");
        if (version != 1)
            throw VersionError("unsupported pcfx version " + std::to_string(version));
        FeatureExtractor fx;
        const int channels[kLevels + 1] = {1, 8, 16, 32};
        for (int l = 0; l < kLevels; ++l) {
            Tensor<float> w = read_pcfx_tensor(is, 4, path);
            Tensor<float> b = read_pcfx_tensor(is, 1, path);
            if (w.n() != channels[l + 1] || w.c() != channels[l] || w.h() != 3 || w.w() != 3)
                throw FormatError("pcfx tensor " + std::to_string(2 * l) +
                                  " has unexpected extents " + w.shape().str());
            if (b.c() != channels[l + 1])
                throw FormatError("pcfx bias " + std::to_string(2 * l + 1) +
                                  " has unexpected extents " + b.shape().str());
            fx.weights_.push_back(w.template cast<T>());
            fx.biases_.push_back(b.template cast<T>());
        }
        if (is.peek() != std::char_traits<char>::eof())
            throw FormatError("trailing bytes after pcfx tensors in '" + path + "'");
        return fx;
    }

private:
    FeatureExtractor() = default;

    static void write_pcfx_tensor(std::ostream& os, const Tensor<T>& t, int rank) {
        write_u32(os, std::uint32_t(rank));
        if (rank == 4) {
            write_u32(os, std::uint32_t(t.n()));
            write_u32(os, std::uint32_t(t.c()));
            write_u32(os, std::uint32_t(t.h()));
            write_u32(os, std::uint32_t(t.w()));
        } else {
            write_u32(os, std::uint32_t(t.size()));
        }
        for (std::size_t i = 0; i < t.size(); ++i) write_f32(os, float(t[i]));
    }

    static Tensor<float> read_pcfx_tensor(std::istream& is, int expected_rank,
                                          const std::string& path) {
        const std::uint32_t rank = read_u32(is, "pcfx tensor rank");
        if (int(rank) != expected_rank)
            throw FormatError("pcfx tensor in '" + path + "' has rank " + std::to_string(rank) +
                              ", expected " + std::to_string(expected_rank));
        int ext[4] = {1, 1, 1, 1};
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            ext[i] = int(read_u32(is, "pcfx tensor extent"));
            count *= std::size_t(ext[i]);
        }
        std::vector<float> vals(count);
        read_f32_span(is, vals.data(), count, "pcfx tensor values");
        if (rank == 1) return Tensor<float>::channel_vector(std::move(vals));
        return Tensor<float>::from_values(ext[0], ext[1], ext[2], ext[3], std::move(vals));
    }

    std::vector<Tensor<T>> weights_, biases_;
};

} // namespace pconv
