#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pconv/adam.hpp"
#include "pconv/io_binary.hpp"
#include "pconv/model.hpp"

namespace pconv {

/// Serialized training state. File layout (little-endian):
///   magic "PCV1", version u32,
///   config length u32 + UTF-8 key=value text,
///   tensor count u32, then per tensor:
///     name length u32, name bytes, rank u32 (= 4), extents u32[4], values f32[],
///   adam tensor count u32 + the same tensor encoding ("m:"/"v:" prefixes),
///   step counter u64, rng state u64[4].
struct Checkpoint {
    ModelConfig config;
    std::vector<Parameter<float>> params; // model tensors incl. running stats
    AdamState<float> adam;
    std::uint64_t t = 0;
    std::array<std::uint64_t, 4> rng{};

    static Checkpoint capture(const Model<float>& model, const AdamState<float>& adam,
                              std::uint64_t t, const std::array<std::uint64_t, 4>& rng) {
        return Checkpoint{model.config, model.params, adam, t, rng};
    }

    /// Materializes the model this checkpoint describes.
    Model<float> restore_model() const { return Model<float>{config, params}; }
};

namespace detail {

inline void write_named_tensor(std::ostream& os, const std::string& name,
                               const Tensor<float>& t) {
    write_u32(os, std::uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    write_u32(os, 4);
    write_u32(os, std::uint32_t(t.n()));
    write_u32(os, std::uint32_t(t.c()));
    write_u32(os, std::uint32_t(t.h()));
    write_u32(os, std::uint32_t(t.w()));
    write_f32_span(os, t.data(), t.size());
}

inline std::pair<std::string, Tensor<float>> read_named_tensor(std::istream& is,
                                                               const char* what) {
    const std::uint32_t name_len = read_u32(is, what);
    if (name_len > 4096) throw FormatError(std::string("implausible tensor name length in ") + what);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), std::streamsize(name_len)))
        throw TruncatedError(std::string("unexpected end of file reading tensor name in ") + what);
    const std::uint32_t rank = read_u32(is, what);
    if (rank != 4)
        throw FormatError("tensor '" + name + "' has rank " + std::to_string(rank) +
                          ", expected 4");
    int ext[4];
    for (int i = 0; i < 4; ++i) ext[i] = int(read_u32(is, what));
    Tensor<float> t(ext[0], ext[1], ext[2], ext[3]);
    read_f32_span(is, t.data(), t.size(), what);
    return {std::move(name), std::move(t)};
}

} // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    write_magic(os, "PCV1");
    write_u32(os, 1);
    const std::string cfg = ck.config.serialize();
    write_u32(os, std::uint32_t(cfg.size()));
    os.write(cfg.data(), std::streamsize(cfg.size()));
    write_u32(os, std::uint32_t(ck.params.size()));
    for (const auto& p : ck.params) detail::write_named_tensor(os, p.name, p.value);
    write_u32(os, std::uint32_t(2 * ck.adam.names.size()));
    for (std::size_t k = 0; k < ck.adam.names.size(); ++k) {
        detail::write_named_tensor(os, "m:" + ck.adam.names[k], ck.adam.m[k]);
        detail::write_named_tensor(os, "v:" + ck.adam.names[k], ck.adam.v[k]);
    }
    write_u64(os, ck.t);
    for (std::uint64_t s : ck.rng) write_u64(os, s);
    if (!os) throw IoError("write failure on '" + path + "'");
}

/// Loads a checkpoint. When expected_config is given, a mismatch with the
/// embedded config is rejected.
inline Checkpoint load_checkpoint(const std::string& path,
                                  const ModelConfig* expected_config = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    expect_magic(is, "PCV1", path.c_str());
    const std::uint32_t version = read_u32(is, "checkpoint version");
    if (version != 1)
        throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                           " in '" + path + "' (this build reads version 1)");
    const std::uint32_t cfg_len = read_u32(is, "config length");
    std::string cfg_text(cfg_len, '\0');
    if (!is.read(cfg_text.data(), std::streamsize(cfg_len)))
        throw TruncatedError("unexpected end of file reading config in '" + path + "'");

    Checkpoint ck;
    ck.config = ModelConfig::parse(cfg_text);
    if (expected_config && !(ck.config == *expected_config))
        throw ConfigError("checkpoint '" + path + "' was built with a different model config:\n" +
                          ck.config.serialize() + "-- expected --\n" +
                          expected_config->serialize());

    // Rebuild a reference model so trainable flags and the expected name set
    // come from the config, not the file.
    Model<float> ref = build_model<float>(ck.config, /*seed=*/0);

    const std::uint32_t n_tensors = read_u32(is, "tensor count");
    if (n_tensors != ref.params.size())
        throw ConfigError("checkpoint '" + path + "' carries " + std::to_string(n_tensors) +
                          " tensors but the config needs " + std::to_string(ref.params.size()));
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        auto [name, t] = detail::read_named_tensor(is, "model tensors");
        const int k = ref.find(name);
        if (k < 0) throw ConfigError("checkpoint tensor '" + name + "' is not a model parameter");
        if (!(ref.params[std::size_t(k)].value.shape() == t.shape()))
            throw ConfigError("checkpoint tensor '" + name + "' has extents " +
                              t.shape().str() + ", expected " +
                              ref.params[std::size_t(k)].value.shape().str());
        ref.params[std::size_t(k)].value = std::move(t);
    }
    ck.params = std::move(ref.params);

    AdamState<float> adam = AdamState<float>::init(Model<float>{ck.config, ck.params});
    const std::uint32_t n_adam = read_u32(is, "adam tensor count");
    if (n_adam != 2 * adam.names.size())
        throw ConfigError("checkpoint '" + path + "' carries " + std::to_string(n_adam) +
                          " adam tensors, expected " + std::to_string(2 * adam.names.size()));
    for (std::uint32_t i = 0; i < n_adam; ++i) {
        auto [name, t] = detail::read_named_tensor(is, "adam tensors");
        const bool is_m = name.rfind("m:", 0) == 0;
        const bool is_v = name.rfind("v:", 0) == 0;
        if (!is_m && !is_v)
            throw FormatError("adam tensor '" + name + "' lacks the m:/v: prefix");
        const std::string base = name.substr(2);
        std::size_t k = 0;
        for (; k < adam.names.size(); ++k)
            if (adam.names[k] == base) break;
        if (k == adam.names.size())
            throw ConfigError("adam tensor '" + name + "' does not match any trainable parameter");
        if (!(adam.m[k].shape() == t.shape()))
            throw ConfigError("adam tensor '" + name + "' has extents " + t.shape().str());
        (is_m ? adam.m[k] : adam.v[k]) = std::move(t);
    }
    ck.adam = std::move(adam);
    ck.t = read_u64(is, "step counter");
    ck.adam.t = ck.t;
    for (auto& s : ck.rng) s = read_u64(is, "rng state");
    if (is.peek() != std::char_traits<char>::eof())
        throw FormatError("trailing bytes after checkpoint payload in '" + path + "'");
    return ck;
}

} // namespace pconv
