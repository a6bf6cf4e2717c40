#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pconv/errors.hpp"
#include "pconv/tensor.hpp"

namespace pconv {

/// Grayscale image with intensities stored as floats in [0,1]. maxval
/// remembers the bit depth of the file it came from so a write reproduces
/// the original quantization.
struct GrayImage {
    int width = 0, height = 0;
    std::vector<float> v;
    int maxval = 255;

    float at(int y, int x) const { return v[std::size_t(y) * width + x]; }
    float& at(int y, int x) { return v[std::size_t(y) * width + x]; }
    std::size_t size() const { return v.size(); }
};

/// Binary validity mask: 1 = valid tissue, 0 = hole (the removed region).
struct BinaryMask {
    int width = 0, height = 0;
    std::vector<std::uint8_t> v;

    std::uint8_t at(int y, int x) const { return v[std::size_t(y) * width + x]; }
    std::uint8_t& at(int y, int x) { return v[std::size_t(y) * width + x]; }
    std::size_t size() const { return v.size(); }

    std::size_t count_holes() const {
        std::size_t n = 0;
        for (auto b : v)
            if (b == 0) ++n;
        return n;
    }
};

/// Small-integer label image (0 = background).
struct LabelMap {
    int width = 0, height = 0;
    std::vector<std::uint16_t> v;

    std::uint16_t at(int y, int x) const { return v[std::size_t(y) * width + x]; }
    std::uint16_t& at(int y, int x) { return v[std::size_t(y) * width + x]; }
    std::size_t size() const { return v.size(); }
};

namespace detail {

struct PgmRaw {
    int width = 0, height = 0, maxval = 0;
    std::vector<std::uint16_t> samples;
};

inline int pgm_read_token(std::istream& is, const std::string& path, const char* what) {
    // Whitespace and '#' comments are legal between header tokens.
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = is.get();
    }
    if (c == EOF)
        throw TruncatedError("unexpected end of file reading " + std::string(what) + " in '" +
                             path + "'");
    if (!std::isdigit(c))
        throw FormatError("expected a number for " + std::string(what) + " in '" + path + "'");
    long value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > 1 << 30) throw FormatError("absurd " + std::string(what) + " in '" + path + "'");
        c = is.get();
    }
    if (c != EOF) is.unget();
    return int(value);
}

inline PgmRaw read_pgm_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    char m0 = 0, m1 = 0;
    if (!is.get(m0) || !is.get(m1))
        throw TruncatedError("unexpected end of file reading magic in '" + path + "'");
    if (m0 == 'P' && (m1 == '2' || m1 == '1' || m1 == '3' || m1 == '6'))
        throw FormatError("'" + path + "' is a P" + std::string(1, m1) +
                          " file; only binary P5 graymaps are supported");
    if (m0 != 'P' || m1 != '5')
        throw BadMagicError("'" + path + "' is not a PGM file (magic '" +
                            std::string{m0, m1} + "')");
    PgmRaw raw;
    raw.width = pgm_read_token(is, path, "width");
    raw.height = pgm_read_token(is, path, "height");
    raw.maxval = pgm_read_token(is, path, "maxval");
    if (raw.maxval == 0) throw FormatError("maxval 0 in '" + path + "'");
    if (raw.maxval > 65535)
        throw FormatError("maxval " + std::to_string(raw.maxval) + " exceeds 65535 in '" +
                          path + "'");
    is.get(); // single whitespace byte before the raster
    const std::size_t n = std::size_t(raw.width) * std::size_t(raw.height);
    raw.samples.resize(n);
    if (raw.maxval < 256) {
        std::vector<unsigned char> buf(n);
        if (!is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(n)))
            throw TruncatedError("truncated raster in '" + path + "'");
        for (std::size_t i = 0; i < n; ++i) raw.samples[i] = buf[i];
    } else {
        std::vector<unsigned char> buf(2 * n);
        if (!is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(2 * n)))
            throw TruncatedError("truncated raster in '" + path + "'");
        for (std::size_t i = 0; i < n; ++i)
            raw.samples[i] = std::uint16_t((buf[2 * i] << 8) | buf[2 * i + 1]); // big-endian
    }
    return raw;
}

inline void write_pgm_raw(const std::string& path, int width, int height, int maxval,
                          const std::vector<std::uint16_t>& samples) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << "P5\n" << width << " " << height << "\n" << maxval << "\n";
    if (maxval < 256) {
        std::vector<unsigned char> buf(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) buf[i] = static_cast<unsigned char>(samples[i]);
        os.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    } else {
        std::vector<unsigned char> buf(2 * samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            buf[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
            buf[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xFF);
        }
        os.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    }
    if (!os) throw IoError("write failure on '" + path + "'");
}

} // namespace detail

/// Reads a binary P5 graymap; intensities are scaled to [0,1] by maxval.
inline GrayImage read_pgm(const std::string& path) {
    detail::PgmRaw raw = detail::read_pgm_raw(path);
    GrayImage img{raw.width, raw.height, {}, raw.maxval};
    img.v.resize(raw.samples.size());
    const float inv = 1.0f / float(raw.maxval);
    for (std::size_t i = 0; i < raw.samples.size(); ++i) img.v[i] = float(raw.samples[i]) * inv;
    return img;
}

inline void write_pgm(const GrayImage& img, const std::string& path) {
    std::vector<std::uint16_t> samples(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        float x = img.v[i];
        x = x < 0.f ? 0.f : (x > 1.f ? 1.f : x);
        samples[i] = std::uint16_t(std::lround(double(x) * img.maxval));
    }
    detail::write_pgm_raw(path, img.width, img.height, img.maxval, samples);
}

/// Masks on disk hold only {0, maxval}; anything else is rejected so a
/// grayscale image cannot silently pass as a mask.
inline BinaryMask read_mask_pgm(const std::string& path) {
    detail::PgmRaw raw = detail::read_pgm_raw(path);
    BinaryMask m{raw.width, raw.height, {}};
    m.v.resize(raw.samples.size());
    for (std::size_t i = 0; i < raw.samples.size(); ++i) {
        if (raw.samples[i] == 0)
            m.v[i] = 0;
        else if (int(raw.samples[i]) == raw.maxval)
            m.v[i] = 1;
        else
            throw ContractError("'" + path + "' is not a binary mask: sample value " +
                                std::to_string(raw.samples[i]) + " with maxval " +
                                std::to_string(raw.maxval));
    }
    return m;
}

inline void write_mask_pgm(const BinaryMask& m, const std::string& path) {
    std::vector<std::uint16_t> samples(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) samples[i] = m.v[i] ? 255 : 0;
    detail::write_pgm_raw(path, m.width, m.height, 255, samples);
}

/// Labels are raw sample values, unscaled.
inline LabelMap read_label_pgm(const std::string& path) {
    detail::PgmRaw raw = detail::read_pgm_raw(path);
    return LabelMap{raw.width, raw.height, std::move(raw.samples)};
}

inline void write_label_pgm(const LabelMap& m, const std::string& path, int maxval = 255) {
    for (auto v : m.v)
        if (int(v) > maxval)
            throw ContractError("label value " + std::to_string(v) + " exceeds maxval " +
                                std::to_string(maxval));
    detail::write_pgm_raw(path, m.width, m.height, maxval, m.v);
}

// ---- conversions between image-domain types and tensors ----

template <typename T = float>
Tensor<T> image_to_tensor(const GrayImage& img) {
    std::vector<T> v(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) v[i] = T(img.v[i]);
    return Tensor<T>::from_values(1, 1, img.height, img.width, std::move(v));
}

template <typename T>
GrayImage tensor_to_image(const Tensor<T>& t, int maxval = 255) {
    if (t.n() != 1 || t.c() != 1)
        throw ShapeError("tensor_to_image: expected extents (1,1,H,W), got " + t.shape().str());
    GrayImage img{t.w(), t.h(), {}, maxval};
    img.v.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        float x = float(t[i]);
        img.v[i] = x < 0.f ? 0.f : (x > 1.f ? 1.f : x);
    }
    return img;
}

template <typename T = float>
Tensor<T> mask_to_tensor(const BinaryMask& m) {
    std::vector<T> v(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) v[i] = m.v[i] ? T(1) : T(0);
    return Tensor<T>::from_values(1, 1, m.height, m.width, std::move(v));
}

template <typename T>
BinaryMask tensor_to_mask(const Tensor<T>& t) {
    if (t.n() != 1 || t.c() != 1)
        throw ShapeError("tensor_to_mask: expected extents (1,1,H,W), got " + t.shape().str());
    BinaryMask m{t.w(), t.h(), {}};
    m.v.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] != T(0) && t[i] != T(1))
            throw ContractError("tensor_to_mask: values must be exactly 0 or 1");
        m.v[i] = t[i] == T(0) ? 0 : 1;
    }
    return m;
}

} // namespace pconv
