#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "pconv/adam.hpp"
#include "pconv/checkpoint.hpp"
#include "pconv/losses.hpp"
#include "pconv/model.hpp"
#include "pconv/rng.hpp"

namespace pconv {

struct TrainConfig {
    double lr_initial = 2e-4;
    double lr_finetune = 5e-5;
    long finetune_start_iter = -1; // -1 -> max_iters / 2
    int batch_size = 6;
    long max_iters = 0;
    std::uint64_t seed = 1;
    long checkpoint_interval = 0; // 0 -> final checkpoint only
    std::string out_dir;          // empty -> no checkpoint files written
    bool freeze_encoder_bn_on_finetune = false;

    long finetune_start(long iters) const {
        return finetune_start_iter >= 0 ? finetune_start_iter : iters / 2;
    }

    void validate() const {
        if (!(lr_initial > 0.0) || !(lr_finetune > 0.0))
            throw ConfigError("learning rates must be positive");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (max_iters < 0) throw ConfigError("max_iters must be >= 0");
        if (finetune_start_iter > max_iters)
            throw ConfigError("finetune_start_iter must be <= max_iters");
        if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
    }
};

template <typename T = float>
struct InpaintSample {
    Tensor<T> image; // (1,1,H,W), values in [0,1]
    Tensor<T> mask;  // (1,1,H,W), binary
};

template <typename T = float>
struct SegSample {
    Tensor<T> image;  // (1,1,H,W)
    Tensor<T> target; // (1,1,H,W), values in {0,1}; 1 marks the object
};

struct IterRecord {
    long iter = 0;
    double lr = 0;
    LossBreakdown loss; // seg runs fill .total with the BCE value
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<IterRecord> curve;
};

namespace detail {

template <typename T>
Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& items) {
    const Shape s0 = items.front()->shape();
    Tensor<T> out(int(items.size()), s0.c, s0.h, s0.w);
    std::size_t off = 0;
    for (const Tensor<T>* t : items) {
        for (std::size_t i = 0; i < t->size(); ++i) out[off + i] = (*t)[i];
        off += t->size();
    }
    return out;
}

inline void write_interval_checkpoint(const Checkpoint& ck, const TrainConfig& tc, long iter,
                                      bool final) {
    if (tc.out_dir.empty()) return;
    char name[64];
    if (final)
        std::snprintf(name, sizeof name, "checkpoint.pcv1");
    else
        std::snprintf(name, sizeof name, "checkpoint_%06ld.pcv1", iter);
    save_checkpoint(ck, (std::filesystem::path(tc.out_dir) / name).string());
}

} // namespace detail

/// Trains the inpainting network. A fresh model is initialized from the
/// seed unless `resume` is given, in which case optimization continues from
/// the stored step with the stored optimizer and generator state, making an
/// interrupted run reproduce the uninterrupted one exactly.
template <typename T = float>
TrainResult train_inpaint(const std::vector<InpaintSample<T>>& dataset, const ModelConfig& mc,
                          const TrainConfig& tc, const FeatureExtractor<T>& fx,
                          const LossWeights& lw = {}, const Checkpoint* resume = nullptr) {
    static_assert(std::is_same_v<T, float>, "checkpoints are single precision");
    tc.validate();
    mc.validate();
    if (dataset.empty()) throw ContractError("train_inpaint: empty dataset");
    const Shape s0 = dataset.front().image.shape();
    for (const auto& s : dataset) {
        if (!(s.image.shape() == s0))
            throw ShapeError("train_inpaint: dataset images must share extents");
        if (!(s.mask.shape() == s0))
            throw ShapeError("train_inpaint: image/mask extents differ, " +
                             s.image.shape().str() + " vs " + s.mask.shape().str());
        require_binary_mask(s.mask, "train_inpaint");
    }

    Model<T> model = resume ? resume->restore_model() : build_pconv_unet<T>(mc, tc.seed);
    if (resume && !(model.config == mc))
        throw ConfigError("resume checkpoint config does not match the requested config");
    AdamState<T> adam = resume ? resume->adam : AdamState<T>::init(model);
    Rng batch_rng(tc.seed, 0xBA7C);
    if (resume) batch_rng.set_state(resume->rng);
    long iter = resume ? long(resume->t) : 0;

    const long ft_start = tc.finetune_start(tc.max_iters);
    TrainResult result;
    for (; iter < tc.max_iters; ++iter) {
        std::vector<const Tensor<T>*> imgs, masks;
        for (int b = 0; b < tc.batch_size; ++b) {
            const std::size_t k = std::size_t(batch_rng.next_below(dataset.size()));
            imgs.push_back(&dataset[k].image);
            masks.push_back(&dataset[k].mask);
        }
        Tensor<T> batch_img = detail::stack_batch(imgs);
        Tensor<T> batch_mask = detail::stack_batch(masks);

        const bool finetune = iter >= ft_start;
        const double lr = finetune ? tc.lr_finetune : tc.lr_initial;
        const BnPhase phase = finetune && tc.freeze_encoder_bn_on_finetune
                                  ? BnPhase::FrozenEncoder
                                  : BnPhase::Train;

        Tape<T> tape;
        TapeBinding<T> bind = bind_params(tape, model);
        auto img = tape.constant(batch_img);
        InpaintGraph<T> g = build_inpaint_graph(tape, model, bind, img, batch_mask, phase);
        InpaintLossGraph<T> loss = build_inpaint_loss(tape, g.output, batch_img, batch_mask, fx, lw);

        const double total = double(tape.value(loss.total).scalar_value());
        if (!std::isfinite(total))
            throw NumericError("train_inpaint: non-finite loss at iteration " +
                               std::to_string(iter));
        result.curve.push_back({iter, lr, loss.breakdown(tape, lw)});

        tape.backward(loss.total);
        std::vector<Tensor<T>> grads;
        for (int i : model.trainable_indices())
            grads.push_back(tape.grad(bind.ids[std::size_t(i)]));
        adam_step(model, grads, adam, lr);

        if (tc.checkpoint_interval > 0 && (iter + 1) % tc.checkpoint_interval == 0 &&
            iter + 1 < tc.max_iters)
            detail::write_interval_checkpoint(
                Checkpoint::capture(model, adam, std::uint64_t(iter + 1), batch_rng.state()), tc,
                iter + 1, false);
    }
    result.checkpoint =
        Checkpoint::capture(model, adam, std::uint64_t(iter), batch_rng.state());
    detail::write_interval_checkpoint(result.checkpoint, tc, iter, true);
    return result;
}

/// Trains the segmentation network with binary cross entropy.
template <typename T = float>
TrainResult train_segment(const std::vector<SegSample<T>>& dataset, const ModelConfig& mc,
                          const TrainConfig& tc, const Checkpoint* resume = nullptr) {
    static_assert(std::is_same_v<T, float>, "checkpoints are single precision");
    tc.validate();
    mc.validate();
    if (dataset.empty()) throw ContractError("train_segment: empty dataset");
    const Shape s0 = dataset.front().image.shape();
    for (const auto& s : dataset) {
        if (!(s.image.shape() == s0) || !(s.target.shape() == s0))
            throw ShapeError("train_segment: dataset images/targets must share extents");
    }

    Model<T> model = resume ? resume->restore_model() : build_seg_unet<T>(mc, tc.seed);
    if (resume && !(model.config == mc))
        throw ConfigError("resume checkpoint config does not match the requested config");
    AdamState<T> adam = resume ? resume->adam : AdamState<T>::init(model);
    Rng batch_rng(tc.seed, 0xBA7C);
    if (resume) batch_rng.set_state(resume->rng);
    long iter = resume ? long(resume->t) : 0;

    const long ft_start = tc.finetune_start(tc.max_iters);
    TrainResult result;
    for (; iter < tc.max_iters; ++iter) {
        std::vector<const Tensor<T>*> imgs, targets;
        for (int b = 0; b < tc.batch_size; ++b) {
            const std::size_t k = std::size_t(batch_rng.next_below(dataset.size()));
            imgs.push_back(&dataset[k].image);
            targets.push_back(&dataset[k].target);
        }
        Tensor<T> batch_img = detail::stack_batch(imgs);
        Tensor<T> batch_target = detail::stack_batch(targets);

        const bool finetune = iter >= ft_start;
        const double lr = finetune ? tc.lr_finetune : tc.lr_initial;
        const BnPhase phase = finetune && tc.freeze_encoder_bn_on_finetune
                                  ? BnPhase::FrozenEncoder
                                  : BnPhase::Train;

        Tape<T> tape;
        TapeBinding<T> bind = bind_params(tape, model);
        auto img = tape.constant(batch_img);
        auto prob = build_seg_graph(tape, model, bind, img, phase);
        auto loss = tape_bce(tape, prob, batch_target);

        const double bce = double(tape.value(loss).scalar_value());
        if (!std::isfinite(bce))
            throw NumericError("train_segment: non-finite loss at iteration " +
                               std::to_string(iter));
        IterRecord rec{iter, lr, {}};
        rec.loss.total = bce;
        result.curve.push_back(rec);

        tape.backward(loss);
        std::vector<Tensor<T>> grads;
        for (int i : model.trainable_indices())
            grads.push_back(tape.grad(bind.ids[std::size_t(i)]));
        adam_step(model, grads, adam, lr);

        if (tc.checkpoint_interval > 0 && (iter + 1) % tc.checkpoint_interval == 0 &&
            iter + 1 < tc.max_iters)
            detail::write_interval_checkpoint(
                Checkpoint::capture(model, adam, std::uint64_t(iter + 1), batch_rng.state()), tc,
                iter + 1, false);
    }
    result.checkpoint =
        Checkpoint::capture(model, adam, std::uint64_t(iter), batch_rng.state());
    detail::write_interval_checkpoint(result.checkpoint, tc, iter, true);
    return result;
}

} // namespace pconv
