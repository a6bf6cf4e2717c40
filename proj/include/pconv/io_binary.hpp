#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "pconv/errors.hpp"

namespace pconv {

// Little-endian primitives shared by the checkpoint and extractor formats.
// The host is assumed little-endian (x86/ARM); static_assert guards the
// float layout.

static_assert(sizeof(float) == 4, "IEEE-754 binary32 required");

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    write_u32(os, std::uint32_t(v & 0xFFFFFFFFULL));
    write_u32(os, std::uint32_t(v >> 32));
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw TruncatedError(std::string("unexpected end of file reading ") + what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
           (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
    std::uint64_t lo = read_u32(is, what);
    std::uint64_t hi = read_u32(is, what);
    return lo | (hi << 32);
}

inline float read_f32(std::istream& is, const char* what) {
    std::uint32_t bits = read_u32(is, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void write_f32_span(std::ostream& os, const float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) write_f32(os, p[i]);
}

inline void read_f32_span(std::istream& is, float* p, std::size_t n, const char* what) {
    for (std::size_t i = 0; i < n; ++i) p[i] = read_f32(is, what);
}

inline void write_magic(std::ostream& os, const char magic[4]) {
    os.write(magic, 4);
}

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
    char got[4];
    if (!is.read(got, 4))
        throw TruncatedError(std::string("unexpected end of file reading magic of ") + what);
    if (std::memcmp(got, magic, 4) != 0)
        throw BadMagicError(std::string("bad magic for ") + what + " (expected '" +
                            std::string(magic, 4) + "', got '" + std::string(got, 4) + "')");
}

} // namespace pconv
