#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "pconv/autograd.hpp"
#include "pconv/ops.hpp"
#include "pconv/partial_conv.hpp"
#include "pconv/rng.hpp"
#include "pconv/tensor.hpp"

namespace pconv {

enum class ModelVariant { PconvUnet, SegUnet };

inline const char* variant_name(ModelVariant v) {
    return v == ModelVariant::PconvUnet ? "pconv_unet" : "seg_unet";
}

/// Declarative network description. Encoder channels double per stage
/// starting from base_channels; batch norm is on everywhere except the first
/// encoder layer and the last decoder layer unless overridden.
struct ModelConfig {
    ModelVariant variant = ModelVariant::PconvUnet;
    int depth = 3;
    int base_channels = 16;
    std::vector<int> kernels;      // per encoder stage; empty means all 3x3
    bool same_resolution = false;  // stride-1 encoder, no resampling (pconv only)
    float leaky_slope = 0.2f;
    std::vector<int> bn_encoder;   // 0/1 per encoder stage; empty -> default rule
    std::vector<int> bn_decoder;   // 0/1 per decoder stage; empty -> default rule
    int in_channels = 1;

    int kernel_at(int stage) const {
        if (kernels.empty()) return 3;
        return kernels[std::size_t(stage) % kernels.size()];
    }
    bool bn_enc_at(int stage) const {
        if (!bn_encoder.empty()) return bn_encoder[std::size_t(stage)] != 0;
        return stage > 0;
    }
    bool bn_dec_at(int stage) const {
        if (!bn_decoder.empty()) return bn_decoder[std::size_t(stage)] != 0;
        return variant == ModelVariant::PconvUnet ? stage < depth - 1 : true;
    }

    int enc_in(int stage) const {
        return stage == 0 ? in_channels : base_channels << (stage - 1);
    }
    int enc_out(int stage) const { return base_channels << stage; }

    /// Skip source for decoder stage d: the input of encoder stage depth-1-d.
    int skip_channels(int d) const {
        return variant == ModelVariant::PconvUnet ? enc_in(depth - 1 - d)
                                                  : enc_out(depth - 1 - d);
    }
    int dec_out(int d) const {
        if (variant == ModelVariant::PconvUnet)
            return d == depth - 1 ? 1 : base_channels << (depth - 2 - d);
        return d == depth - 1 ? base_channels : base_channels << (depth - 2 - d);
    }
    int dec_in(int d) const {
        const int prev = d == 0 ? enc_out(depth - 1) : dec_out(d - 1);
        return prev + skip_channels(d);
    }

    void validate() const {
        std::string problems;
        auto flag = [&](const std::string& p) {
            if (!problems.empty()) problems += "; ";
            problems += p;
        };
        if (depth < 1) flag("depth must be >= 1");
        if (base_channels < 1) flag("base_channels must be >= 1");
        if (in_channels < 1) flag("in_channels must be >= 1");
        if (!(leaky_slope > 0.f && leaky_slope < 1.f)) flag("leaky_slope must be in (0,1)");
        for (int k : kernels)
            if (k < 1 || k % 2 == 0) flag("kernel sizes must be odd and positive");
        if (!kernels.empty() && int(kernels.size()) != depth)
            flag("kernels must list one size per encoder stage");
        if (!bn_encoder.empty() && int(bn_encoder.size()) != depth)
            flag("bn_encoder must list one flag per encoder stage");
        if (!bn_decoder.empty() && int(bn_decoder.size()) != depth)
            flag("bn_decoder must list one flag per decoder stage");
        if (!bn_encoder.empty() && bn_encoder[0] != 0)
            flag("batch norm must stay off on the first encoder layer");
        if (variant == ModelVariant::PconvUnet && !bn_decoder.empty() &&
            bn_decoder[std::size_t(depth - 1)] != 0)
            flag("batch norm must stay off on the last decoder layer");
        if (same_resolution && variant != ModelVariant::PconvUnet)
            flag("same_resolution applies to the pconv_unet variant only");
        if (!problems.empty()) throw ConfigError("invalid model config: " + problems);
    }

    /// Spatial divisibility required of inputs.
    int extent_divisor() const {
        if (variant == ModelVariant::PconvUnet && same_resolution) return 1;
        return 1 << depth;
    }

    // Flat key = value text, embedded in checkpoints.
    std::string serialize() const {
        auto fmt_float = [](float v) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.9g", double(v));
            return std::string(buf);
        };
        auto fmt_list = [](const std::vector<int>& xs) {
            std::string s;
            for (std::size_t i = 0; i < xs.size(); ++i)
                s += (i ? "," : "") + std::to_string(xs[i]);
            return s;
        };
        std::string s;
        s += "variant = " + std::string(variant_name(variant)) + "\n";
        s += "depth = " + std::to_string(depth) + "\n";
        s += "base_channels = " + std::to_string(base_channels) + "\n";
        s += "kernels = " + fmt_list(kernels) + "\n";
        s += "same_resolution = " + std::string(same_resolution ? "1" : "0") + "\n";
        s += "leaky_slope = " + fmt_float(leaky_slope) + "\n";
        s += "bn_encoder = " + fmt_list(bn_encoder) + "\n";
        s += "bn_decoder = " + fmt_list(bn_decoder) + "\n";
        s += "in_channels = " + std::to_string(in_channels) + "\n";
        return s;
    }

    static ModelConfig parse(const std::string& text);

    bool operator==(const ModelConfig& o) const {
        return serialize() == o.serialize();
    }
};

namespace detail {

inline std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
    std::vector<int> out;
    std::string cur;
    auto take = [&] {
        if (cur.empty()) return;
        try {
            out.push_back(std::stoi(cur));
        } catch (const std::exception&) {
            throw ConfigError("bad integer '" + cur + "' in key '" + key + "'");
        }
        cur.clear();
    };
    for (char c : s) {
        if (c == ',')
            take();
        else if (!std::isspace(static_cast<unsigned char>(c)))
            cur += c;
    }
    take();
    return out;
}

/// Parses flat `key = value` text with '#' comments. Returns pairs in file
/// order; callers decide which keys are legal.
inline std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    auto trim = [](std::string s) {
        const char* ws = " \t\r";
        const auto b = s.find_first_not_of(ws);
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(ws);
        return s.substr(b, e - b + 1);
    };
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("malformed config line (expected key = value): '" + line + "'");
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

} // namespace detail

inline ModelConfig ModelConfig::parse(const std::string& text) {
    ModelConfig c;
    for (const auto& [key, value] : detail::parse_kv_text(text)) {
        try {
            if (key == "variant") {
                if (value == "pconv_unet")
                    c.variant = ModelVariant::PconvUnet;
                else if (value == "seg_unet")
                    c.variant = ModelVariant::SegUnet;
                else
                    throw ConfigError("unknown variant '" + value + "'");
            } else if (key == "depth")
                c.depth = std::stoi(value);
            else if (key == "base_channels")
                c.base_channels = std::stoi(value);
            else if (key == "kernels")
                c.kernels = detail::parse_int_list(value, key);
            else if (key == "same_resolution")
                c.same_resolution = value == "1" || value == "true";
            else if (key == "leaky_slope")
                c.leaky_slope = std::stof(value);
            else if (key == "bn_encoder")
                c.bn_encoder = detail::parse_int_list(value, key);
            else if (key == "bn_decoder")
                c.bn_decoder = detail::parse_int_list(value, key);
            else if (key == "in_channels")
                c.in_channels = std::stoi(value);
            else
                throw ConfigError("unknown model config key '" + key + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("bad value '" + value + "' for key '" + key + "'");
        }
    }
    return c;
}

template <typename T = float>
struct Parameter {
    std::string name;
    Tensor<T> value;
    bool trainable = true;
};

/// A built network: the config plus its named parameter tensors (trainable
/// weights and the batch-norm running statistics).
template <typename T = float>
struct Model {
    ModelConfig config;
    std::vector<Parameter<T>> params;

    int find(const std::string& name) const {
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].name == name) return int(i);
        return -1;
    }
    Tensor<T>& param(const std::string& name) {
        const int i = find(name);
        if (i < 0) throw ConfigError("model has no parameter named '" + name + "'");
        return params[std::size_t(i)].value;
    }
    const Tensor<T>& param(const std::string& name) const {
        return const_cast<Model*>(this)->param(name);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params)
            if (p.trainable) n += p.value.size();
        return n;
    }

    std::vector<int> trainable_indices() const {
        std::vector<int> idx;
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].trainable) idx.push_back(int(i));
        return idx;
    }
};

namespace detail {

template <typename T>
void add_conv_params(Model<T>& m, const std::string& prefix, int cin, int cout, int k,
                     bool with_bn, Rng& rng) {
    const double std_dev = std::sqrt(2.0 / (double(cin) * k * k));
    std::vector<T> wv(std::size_t(cout) * cin * k * k);
    for (auto& v : wv) v = T(std_dev * rng.normal());
    m.params.push_back({prefix + ".w", Tensor<T>::from_values(cout, cin, k, k, std::move(wv)), true});
    m.params.push_back({prefix + ".b", Tensor<T>(1, cout, 1, 1, T(0)), true});
    if (with_bn) {
        m.params.push_back({prefix + ".bn.gamma", Tensor<T>(1, cout, 1, 1, T(1)), true});
        m.params.push_back({prefix + ".bn.beta", Tensor<T>(1, cout, 1, 1, T(0)), true});
        m.params.push_back({prefix + ".bn.rmean", Tensor<T>(1, cout, 1, 1, T(0)), false});
        m.params.push_back({prefix + ".bn.rvar", Tensor<T>(1, cout, 1, 1, T(1)), false});
    }
}

} // namespace detail

/// Builds the partial-convolution encoder/decoder. Encoder stages stride 2
/// (or 1 with same_resolution) with ReLU; decoder stages upsample, merge the
/// skip, then partial-convolve with LeakyReLU; the last decoder stage emits
/// one channel with no norm or activation.
template <typename T = float>
Model<T> build_pconv_unet(const ModelConfig& config, std::uint64_t seed) {
    if (config.variant != ModelVariant::PconvUnet)
        throw ConfigError("build_pconv_unet: config variant is not pconv_unet");
    config.validate();
    Model<T> m{config, {}};
    Rng rng(seed, 0x1A17);
    for (int s = 0; s < config.depth; ++s)
        detail::add_conv_params(m, "enc" + std::to_string(s), config.enc_in(s),
                                config.enc_out(s), config.kernel_at(s), config.bn_enc_at(s), rng);
    for (int d = 0; d < config.depth; ++d)
        detail::add_conv_params(m, "dec" + std::to_string(d), config.dec_in(d),
                                config.dec_out(d), 3, config.bn_dec_at(d), rng);
    return m;
}

/// Builds the segmentation network: conv/ReLU stages with 2x2 max-pool in
/// the encoder, upsample + skip-concat stages in the decoder, and a 1x1
/// sigmoid head.
template <typename T = float>
Model<T> build_seg_unet(const ModelConfig& config, std::uint64_t seed) {
    if (config.variant != ModelVariant::SegUnet)
        throw ConfigError("build_seg_unet: config variant is not seg_unet");
    config.validate();
    Model<T> m{config, {}};
    Rng rng(seed, 0x5E6);
    for (int s = 0; s < config.depth; ++s)
        detail::add_conv_params(m, "enc" + std::to_string(s), config.enc_in(s),
                                config.enc_out(s), config.kernel_at(s), config.bn_enc_at(s), rng);
    for (int d = 0; d < config.depth; ++d)
        detail::add_conv_params(m, "dec" + std::to_string(d), config.dec_in(d),
                                config.dec_out(d), 3, config.bn_dec_at(d), rng);
    detail::add_conv_params(m, "head", config.dec_out(config.depth - 1), 1, 1, false, rng);
    return m;
}

template <typename T = float>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
    return config.variant == ModelVariant::PconvUnet ? build_pconv_unet<T>(config, seed)
                                                     : build_seg_unet<T>(config, seed);
}

/// Maps model parameters onto tape leaves. Running statistics are not tape
/// values; they live in the model and are read/updated by the forward pass.
template <typename T>
struct TapeBinding {
    std::vector<typename Tape<T>::Id> ids; // parallel to model.params; -1 if unbound

    typename Tape<T>::Id id_of(const Model<T>& m, const std::string& name) const {
        const int i = m.find(name);
        if (i < 0 || ids[std::size_t(i)] < 0)
            throw ConfigError("parameter '" + name + "' is not bound to the tape");
        return ids[std::size_t(i)];
    }
};

template <typename T>
TapeBinding<T> bind_params(Tape<T>& tape, const Model<T>& model, bool with_grads = true) {
    TapeBinding<T> b;
    b.ids.assign(model.params.size(), -1);
    for (std::size_t i = 0; i < model.params.size(); ++i)
        if (model.params[i].trainable)
            b.ids[i] = tape.input(model.params[i].value, with_grads);
    return b;
}

enum class BnPhase { Train, Eval, FrozenEncoder };

template <typename T>
struct InpaintGraph {
    typename Tape<T>::Id output;           // (N,1,H,W)
    Tensor<T> final_mask;                  // (N,1,H,W)
    std::vector<typename Tape<T>::Id> layer_outputs;
    std::vector<Tensor<T>> layer_masks;
};

namespace detail {

template <typename T>
typename Tape<T>::Id apply_bn(Tape<T>& tape, Model<T>& model, const TapeBinding<T>& bind,
                              typename Tape<T>::Id x, const std::string& prefix, bool train_stats) {
    const auto gamma = bind.id_of(model, prefix + ".bn.gamma");
    const auto beta = bind.id_of(model, prefix + ".bn.beta");
    Tensor<T>& rm = model.param(prefix + ".bn.rmean");
    Tensor<T>& rv = model.param(prefix + ".bn.rvar");
    if (train_stats)
        return tape.batch_norm_train(x, gamma, beta, T(1e-5), T(0.1), &rm, &rv);
    return tape.batch_norm_eval(x, gamma, beta, T(1e-5), rm, rv);
}

} // namespace detail

/// Records the inpainting forward pass on the tape. The mask is data, not a
/// differentiable value; every stage's mask is computed alongside and the
/// decoder merges skip masks with elementwise max.
template <typename T>
InpaintGraph<T> build_inpaint_graph(Tape<T>& tape, Model<T>& model, const TapeBinding<T>& bind,
                                    typename Tape<T>::Id image, const Tensor<T>& mask,
                                    BnPhase phase = BnPhase::Eval) {
    const ModelConfig& cfg = model.config;
    if (cfg.variant != ModelVariant::PconvUnet)
        throw ConfigError("build_inpaint_graph: model variant is not pconv_unet");
    const Tensor<T>& img = tape.value(image);
    require_binary_mask(mask, "inpaint_forward");
    if (mask.n() != img.n() || mask.h() != img.h() || mask.w() != img.w())
        throw ShapeError("inpaint_forward: mask extents " + mask.shape().str() +
                         " do not match image " + img.shape().str());
    const int div = cfg.extent_divisor();
    if (img.h() % div != 0 || img.w() % div != 0)
        throw ShapeError("inpaint_forward: height/width must be divisible by " +
                         std::to_string(div) + " at depth " + std::to_string(cfg.depth) +
                         "; pad the image to a multiple of " + std::to_string(div));

    const int stride = cfg.same_resolution ? 1 : 2;
    InpaintGraph<T> g;
    struct Skip {
        typename Tape<T>::Id features;
        Tensor<T> mask;
    };
    std::vector<Skip> skips;
    typename Tape<T>::Id x = image;
    Tensor<T> m = mask;

    for (int s = 0; s < cfg.depth; ++s) {
        skips.push_back({x, m});
        const std::string p = "enc" + std::to_string(s);
        const int k = cfg.kernel_at(s);
        Tensor<T> m_next;
        x = tape.pconv(x, bind.id_of(model, p + ".w"), bind.id_of(model, p + ".b"), m, stride,
                       k / 2, &m_next);
        m = std::move(m_next);
        if (cfg.bn_enc_at(s))
            x = detail::apply_bn(tape, model, bind, x, p, phase == BnPhase::Train);
        x = tape.relu(x);
        g.layer_outputs.push_back(x);
        g.layer_masks.push_back(m);
    }

    for (int d = 0; d < cfg.depth; ++d) {
        const Skip& skip = skips[std::size_t(cfg.depth - 1 - d)];
        if (!cfg.same_resolution) {
            x = tape.upsample_nearest(x, 2);
            m = upsample_nearest(m, 2);
        }
        x = tape.concat_channels(x, skip.features);
        Tensor<T> merged(m.shape());
        for (std::size_t i = 0; i < merged.size(); ++i)
            merged[i] = std::max(m[i], skip.mask[i]);
        const std::string p = "dec" + std::to_string(d);
        const bool last = d == cfg.depth - 1;
        Tensor<T> m_next;
        x = tape.pconv(x, bind.id_of(model, p + ".w"), bind.id_of(model, p + ".b"), merged, 1, 1,
                       &m_next);
        m = std::move(m_next);
        if (cfg.bn_dec_at(d))
            x = detail::apply_bn(tape, model, bind, x, p, phase != BnPhase::Eval);
        if (!last) x = tape.leaky_relu(x, T(cfg.leaky_slope));
        g.layer_outputs.push_back(x);
        g.layer_masks.push_back(m);
    }
    g.output = x;
    g.final_mask = m;
    return g;
}

/// Records the segmentation forward pass; returns the sigmoid probability
/// map id.
template <typename T>
typename Tape<T>::Id build_seg_graph(Tape<T>& tape, Model<T>& model, const TapeBinding<T>& bind,
                                     typename Tape<T>::Id image, BnPhase phase = BnPhase::Eval) {
    const ModelConfig& cfg = model.config;
    if (cfg.variant != ModelVariant::SegUnet)
        throw ConfigError("build_seg_graph: model variant is not seg_unet");
    const Tensor<T>& img = tape.value(image);
    const int div = cfg.extent_divisor();
    if (img.h() % div != 0 || img.w() % div != 0)
        throw ShapeError("seg_forward: height/width must be divisible by " + std::to_string(div) +
                         " at depth " + std::to_string(cfg.depth) +
                         "; pad the image to a multiple of " + std::to_string(div));

    std::vector<typename Tape<T>::Id> skips;
    typename Tape<T>::Id x = image;
    for (int s = 0; s < cfg.depth; ++s) {
        const std::string p = "enc" + std::to_string(s);
        x = tape.conv2d(x, bind.id_of(model, p + ".w"), bind.id_of(model, p + ".b"), 1,
                        cfg.kernel_at(s) / 2);
        if (cfg.bn_enc_at(s))
            x = detail::apply_bn(tape, model, bind, x, p, phase == BnPhase::Train);
        x = tape.relu(x);
        skips.push_back(x);
        x = tape.max_pool2(x);
    }
    for (int d = 0; d < cfg.depth; ++d) {
        x = tape.upsample_nearest(x, 2);
        x = tape.concat_channels(x, skips[std::size_t(cfg.depth - 1 - d)]);
        const std::string p = "dec" + std::to_string(d);
        x = tape.conv2d(x, bind.id_of(model, p + ".w"), bind.id_of(model, p + ".b"), 1, 1);
        if (cfg.bn_dec_at(d))
            x = detail::apply_bn(tape, model, bind, x, p, phase != BnPhase::Eval);
        x = tape.relu(x);
    }
    x = tape.conv2d(x, bind.id_of(model, "head.w"), bind.id_of(model, "head.b"), 1, 0);
    return tape.sigmoid(x);
}

template <typename T = float>
struct ForwardResult {
    Tensor<T> output;
    Tensor<T> final_mask;
    std::vector<Tensor<T>> layer_outputs; // populated when a trace is requested
    std::vector<Tensor<T>> layer_masks;
};

/// Runs the inpainting network on one batch. Valid pixels must lie in
/// [0,1]; hole pixel values are ignored by construction.
template <typename T>
ForwardResult<T> inpaint_forward(Model<T>& model, const Tensor<T>& image, const Tensor<T>& mask,
                                 BnPhase phase = BnPhase::Eval, bool want_trace = false) {
    for (int n = 0; n < image.n(); ++n)
        for (int c = 0; c < image.c(); ++c)
            for (int yy = 0; yy < image.h(); ++yy)
                for (int xx = 0; xx < image.w(); ++xx)
                    if (mask.at(n, 0, yy, xx) != T(0)) {
                        const T v = image.at(n, c, yy, xx);
                        if (!(v >= T(0) && v <= T(1)))
                            throw ContractError(
                                "inpaint_forward: valid pixels must lie in [0,1]");
                    }
    Tape<T> tape;
    TapeBinding<T> bind = bind_params(tape, model, /*with_grads=*/false);
    auto img = tape.constant(image);
    InpaintGraph<T> g = build_inpaint_graph(tape, model, bind, img, mask, phase);
    ForwardResult<T> r{tape.value(g.output), std::move(g.final_mask), {}, {}};
    if (want_trace) {
        for (auto id : g.layer_outputs) r.layer_outputs.push_back(tape.value(id));
        r.layer_masks = std::move(g.layer_masks);
    }
    return r;
}

/// Runs the segmentation network; the output is a probability map in (0,1).
template <typename T>
Tensor<T> seg_forward(Model<T>& model, const Tensor<T>& image, BnPhase phase = BnPhase::Eval) {
    Tape<T> tape;
    TapeBinding<T> bind = bind_params(tape, model, /*with_grads=*/false);
    auto img = tape.constant(image);
    auto out = build_seg_graph(tape, model, bind, img, phase);
    return tape.value(out);
}

} // namespace pconv
