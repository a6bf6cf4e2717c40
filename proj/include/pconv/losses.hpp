#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pconv/autograd.hpp"
#include "pconv/features.hpp"
#include "pconv/ops.hpp"
#include "pconv/partial_conv.hpp"
#include "pconv/tensor.hpp"

namespace pconv {

/// Coefficients of the weighted total loss: hole and valid L1, perceptual,
/// style (applied to both the raw output and the composite), and total
/// variation.
struct LossWeights {
    double w_masked = 6.0;
    double w_valid = 1.0;
    double w_perc = 0.05;
    double w_style = 120.0;
    double w_tv = 0.1;
};

template <typename T>
void check_loss_inputs(const Tensor<T>& i_out, const Tensor<T>& i_gt, const Tensor<T>& mask,
                       const char* what) {
    require_same_shape(i_out, i_gt, what);
    require_binary_mask(mask, what);
    if (mask.n() != i_out.n() || mask.h() != i_out.h() || mask.w() != i_out.w())
        throw ShapeError(std::string(what) + ": mask extents " + mask.shape().str() +
                         " do not match image " + i_out.shape().str());
}

/// Composite image: ground truth on valid pixels, network output inside the
/// holes. The single mask channel applies to every image channel.
template <typename T>
Tensor<T> compose_comp(const Tensor<T>& i_out, const Tensor<T>& i_gt, const Tensor<T>& mask) {
    check_loss_inputs(i_out, i_gt, mask, "compose_comp");
    Tensor<T> y(i_out.shape());
    for (int n = 0; n < y.n(); ++n)
        for (int c = 0; c < y.c(); ++c)
            for (int yy = 0; yy < y.h(); ++yy)
                for (int xx = 0; xx < y.w(); ++xx)
                    y.at(n, c, yy, xx) = mask.at(n, 0, yy, xx) != T(0)
                                             ? i_gt.at(n, c, yy, xx)
                                             : i_out.at(n, c, yy, xx);
    return y;
}

namespace detail {

/// L1 over the selected mask region divided by the total element count.
template <typename T>
double masked_l1_mean(const Tensor<T>& i_out, const Tensor<T>& i_gt, const Tensor<T>& mask,
                      bool select_holes) {
    double s = 0.0;
    for (int n = 0; n < i_out.n(); ++n)
        for (int c = 0; c < i_out.c(); ++c)
            for (int yy = 0; yy < i_out.h(); ++yy)
                for (int xx = 0; xx < i_out.w(); ++xx) {
                    const bool hole = mask.at(n, 0, yy, xx) == T(0);
                    if (hole == select_holes)
                        s += std::abs(double(i_out.at(n, c, yy, xx)) -
                                      double(i_gt.at(n, c, yy, xx)));
                }
    return s / double(i_out.size());
}

} // namespace detail

/// Mean absolute error restricted to hole pixels, normalized by the total
/// element count of i_gt.
template <typename T>
double l_masked(const Tensor<T>& i_out, const Tensor<T>& i_gt, const Tensor<T>& mask) {
    check_loss_inputs(i_out, i_gt, mask, "l_masked");
    return detail::masked_l1_mean(i_out, i_gt, mask, /*select_holes=*/true);
}

/// Counterpart of l_masked over valid pixels.
template <typename T>
double l_valid(const Tensor<T>& i_out, const Tensor<T>& i_gt, const Tensor<T>& mask) {
    check_loss_inputs(i_out, i_gt, mask, "l_valid");
    return detail::masked_l1_mean(i_out, i_gt, mask, /*select_holes=*/false);
}

/// Normalized Gram matrix per batch item: G = Psi^T Psi / (C*H*W) with Psi
/// flattened to (H*W) x C. Output is (N,1,C,C).
template <typename T>
Tensor<T> gram(const Tensor<T>& psi) {
    const int N = psi.n(), C = psi.c(), H = psi.h(), W = psi.w();
    const double k = 1.0 / (double(C) * double(H) * double(W));
    Tensor<T> g(N, 1, C, C);
    for (int n = 0; n < N; ++n)
        for (int a = 0; a < C; ++a)
            for (int b = a; b < C; ++b) {
                double acc = 0.0;
                for (int yy = 0; yy < H; ++yy)
                    for (int xx = 0; xx < W; ++xx)
                        acc += double(psi.at(n, a, yy, xx)) * double(psi.at(n, b, yy, xx));
                const T v = T(k * acc);
                g.at(n, 0, a, b) = v;
                g.at(n, 0, b, a) = v;
            }
    return g;
}

template <typename T>
void check_pyramids(const FeaturePyramid<T>& a, const FeaturePyramid<T>& b, const char* what) {
    if (a.levels.size() != b.levels.size())
        throw ShapeError(std::string(what) + ": pyramid depth mismatch, " +
                         std::to_string(a.levels.size()) + " vs " +
                         std::to_string(b.levels.size()));
    for (std::size_t p = 0; p < a.levels.size(); ++p)
        require_same_shape(a.levels[p], b.levels[p], what);
}

/// Perceptual loss: per-level normalized L1 between the output pyramid and
/// the ground-truth pyramid, plus the same between the composite pyramid and
/// the ground-truth pyramid.
template <typename T>
double l_perc(const FeaturePyramid<T>& pyr_out, const FeaturePyramid<T>& pyr_comp,
              const FeaturePyramid<T>& pyr_gt) {
    check_pyramids(pyr_out, pyr_gt, "l_perc");
    check_pyramids(pyr_comp, pyr_gt, "l_perc");
    double s = 0.0;
    for (std::size_t p = 0; p < pyr_gt.levels.size(); ++p) {
        const double denom = double(pyr_gt.levels[p].size());
        s += abs_sum(sub(pyr_out.levels[p], pyr_gt.levels[p])) / denom;
        s += abs_sum(sub(pyr_comp.levels[p], pyr_gt.levels[p])) / denom;
    }
    return s;
}

/// Style loss: per-level L1 between normalized Gram matrices, scaled by
/// 1/(C*C). Both Gram matrices carry the 1/(C*H*W) normalization.
template <typename T>
double l_style(const FeaturePyramid<T>& pyr_a, const FeaturePyramid<T>& pyr_gt) {
    check_pyramids(pyr_a, pyr_gt, "l_style");
    double s = 0.0;
    for (std::size_t p = 0; p < pyr_gt.levels.size(); ++p) {
        const double c = double(pyr_gt.levels[p].c());
        s += abs_sum(sub(gram(pyr_a.levels[p]), gram(pyr_gt.levels[p]))) / (c * c);
    }
    return s;
}

/// The smoothing region of the total-variation penalty: the hole region
/// grown by one pixel with a 3x3 square footprint (which includes the hole
/// itself). 1 marks pixels inside R.
template <typename T>
Tensor<T> tv_region(const Tensor<T>& mask) {
    Tensor<T> hole = mask;
    for (std::size_t i = 0; i < hole.size(); ++i) hole[i] = hole[i] == T(0) ? T(1) : T(0);
    return mask_update(hole, 3, 3, 1, 1);
}

/// Total variation over neighbour pairs that lie entirely inside R,
/// normalized by the total element count of i_comp.
template <typename T>
double l_tv(const Tensor<T>& i_comp, const Tensor<T>& mask) {
    require_binary_mask(mask, "l_tv");
    if (mask.n() != i_comp.n() || mask.h() != i_comp.h() || mask.w() != i_comp.w())
        throw ShapeError("l_tv: mask extents " + mask.shape().str() + " do not match image " +
                         i_comp.shape().str());
    const Tensor<T> region = tv_region(mask);
    double s = 0.0;
    for (int n = 0; n < i_comp.n(); ++n)
        for (int c = 0; c < i_comp.c(); ++c)
            for (int yy = 0; yy < i_comp.h(); ++yy)
                for (int xx = 0; xx < i_comp.w(); ++xx) {
                    if (region.at(n, 0, yy, xx) == T(0)) continue;
                    if (xx + 1 < i_comp.w() && region.at(n, 0, yy, xx + 1) != T(0))
                        s += std::abs(double(i_comp.at(n, c, yy, xx + 1)) -
                                      double(i_comp.at(n, c, yy, xx)));
                    if (yy + 1 < i_comp.h() && region.at(n, 0, yy + 1, xx) != T(0))
                        s += std::abs(double(i_comp.at(n, c, yy + 1, xx)) -
                                      double(i_comp.at(n, c, yy, xx)));
                }
    return s / double(i_comp.size());
}

/// Binary cross entropy with predictions clamped to [eps, 1-eps].
template <typename T>
double bce_loss(const Tensor<T>& pred, const Tensor<T>& target, double eps = 1e-7) {
    require_same_shape(pred, target, "bce_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double t = double(target[i]);
        if (t != 0.0 && t != 1.0)
            throw ContractError("bce_loss: target values must be exactly 0 or 1");
        double p = double(pred[i]);
        p = p < eps ? eps : (p > 1.0 - eps ? 1.0 - eps : p);
        s += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    }
    return s / double(pred.size());
}

struct LossBreakdown {
    double masked = 0, valid = 0, perc = 0, style_out = 0, style_comp = 0, tv = 0;
    double total = 0;

    double recompose(const LossWeights& w) const {
        return w.w_masked * masked + w.w_valid * valid + w.w_perc * perc +
               w.w_style * (style_out + style_comp) + w.w_tv * tv;
    }
};

/// The weighted total loss with its per-term breakdown.
template <typename T>
LossBreakdown l_total(const Tensor<T>& i_out, const Tensor<T>& i_gt, const Tensor<T>& mask,
                      const FeatureExtractor<T>& fx, const LossWeights& w = {}) {
    check_loss_inputs(i_out, i_gt, mask, "l_total");
    LossBreakdown b;
    b.masked = l_masked(i_out, i_gt, mask);
    b.valid = l_valid(i_out, i_gt, mask);
    const Tensor<T> comp = compose_comp(i_out, i_gt, mask);
    const FeaturePyramid<T> pyr_out = fx.extract(i_out);
    const FeaturePyramid<T> pyr_comp = fx.extract(comp);
    const FeaturePyramid<T> pyr_gt = fx.extract(i_gt);
    b.perc = l_perc(pyr_out, pyr_comp, pyr_gt);
    b.style_out = l_style(pyr_out, pyr_gt);
    b.style_comp = l_style(pyr_comp, pyr_gt);
    b.tv = l_tv(comp, mask);
    b.total = b.recompose(w);
    return b;
}

// ---- tape variants, for training ----

template <typename T>
typename Tape<T>::Id tape_gram(Tape<T>& tape, typename Tape<T>::Id psi) {
    Tensor<T> g = gram(tape.value(psi));
    return tape.emit(std::move(g), tape.requires_grad(psi),
                     [psi, out = typename Tape<T>::Id(tape.node_count())](Tape<T>& t) {
                         const Tensor<T>& gg = t.grad(out);
                         const Tensor<T>& p = t.value(psi);
                         const int N = p.n(), C = p.c(), H = p.h(), W = p.w();
                         const double k = 1.0 / (double(C) * double(H) * double(W));
                         Tensor<T> gp(p.shape());
                         for (int n = 0; n < N; ++n)
                             for (int a = 0; a < C; ++a) {
                                 std::vector<double> coef(static_cast<std::size_t>(C));
                                 for (int b = 0; b < C; ++b)
                                     coef[std::size_t(b)] = k * (double(gg.at(n, 0, a, b)) +
                                                                 double(gg.at(n, 0, b, a)));
                                 for (int yy = 0; yy < H; ++yy)
                                     for (int xx = 0; xx < W; ++xx) {
                                         double acc = 0.0;
                                         for (int b = 0; b < C; ++b)
                                             acc += coef[std::size_t(b)] *
                                                    double(p.at(n, b, yy, xx));
                                         gp.at(n, a, yy, xx) = T(acc);
                                     }
                             }
                         t.add_grad(psi, gp);
                     });
}

template <typename T>
typename Tape<T>::Id tape_tv(Tape<T>& tape, typename Tape<T>::Id comp, const Tensor<T>& mask) {
    const Tensor<T> region = tv_region(mask);
    const double loss = l_tv(tape.value(comp), mask);
    const double denom = double(tape.value(comp).size());
    return tape.emit(Tensor<T>::scalar(T(loss)), tape.requires_grad(comp),
                     [comp, region, denom,
                      out = typename Tape<T>::Id(tape.node_count())](Tape<T>& t) {
                         const T g = t.grad(out)[0];
                         const Tensor<T>& x = t.value(comp);
                         Tensor<T> gx(x.shape());
                         const T unit = T(double(g) / denom);
                         for (int n = 0; n < x.n(); ++n)
                             for (int c = 0; c < x.c(); ++c)
                                 for (int yy = 0; yy < x.h(); ++yy)
                                     for (int xx = 0; xx < x.w(); ++xx) {
                                         if (region.at(n, 0, yy, xx) == T(0)) continue;
                                         if (xx + 1 < x.w() &&
                                             region.at(n, 0, yy, xx + 1) != T(0)) {
                                             const T d = x.at(n, c, yy, xx + 1) - x.at(n, c, yy, xx);
                                             const T s = d > T(0) ? unit : (d < T(0) ? -unit : T(0));
                                             gx.at(n, c, yy, xx + 1) += s;
                                             gx.at(n, c, yy, xx) -= s;
                                         }
                                         if (yy + 1 < x.h() &&
                                             region.at(n, 0, yy + 1, xx) != T(0)) {
                                             const T d = x.at(n, c, yy + 1, xx) - x.at(n, c, yy, xx);
                                             const T s = d > T(0) ? unit : (d < T(0) ? -unit : T(0));
                                             gx.at(n, c, yy + 1, xx) += s;
                                             gx.at(n, c, yy, xx) -= s;
                                         }
                                     }
                         t.add_grad(comp, gx);
                     });
}

template <typename T>
typename Tape<T>::Id tape_bce(Tape<T>& tape, typename Tape<T>::Id pred, Tensor<T> target,
                              double eps = 1e-7) {
    const double loss = bce_loss(tape.value(pred), target, eps);
    return tape.emit(Tensor<T>::scalar(T(loss)), tape.requires_grad(pred),
                     [pred, target = std::move(target), eps,
                      out = typename Tape<T>::Id(tape.node_count())](Tape<T>& t) {
                         const double g = double(t.grad(out)[0]);
                         const Tensor<T>& p = t.value(pred);
                         Tensor<T> gp(p.shape());
                         const double inv_n = 1.0 / double(p.size());
                         for (std::size_t i = 0; i < p.size(); ++i) {
                             const double pv = double(p[i]);
                             if (pv <= eps || pv >= 1.0 - eps) continue; // clamped: flat
                             const double tv = double(target[i]);
                             gp[i] = T(g * inv_n * (-(tv / pv) + (1.0 - tv) / (1.0 - pv)));
                         }
                         t.add_grad(pred, gp);
                     });
}

/// Scalar ids of every loss term plus the weighted total, all living on the
/// caller's tape.
template <typename T>
struct InpaintLossGraph {
    typename Tape<T>::Id masked, valid, perc, style_out, style_comp, tv, total;

    LossBreakdown breakdown(const Tape<T>& tape, const LossWeights& w) const {
        LossBreakdown b;
        b.masked = double(tape.value(masked).scalar_value());
        b.valid = double(tape.value(valid).scalar_value());
        b.perc = double(tape.value(perc).scalar_value());
        b.style_out = double(tape.value(style_out).scalar_value());
        b.style_comp = double(tape.value(style_comp).scalar_value());
        b.tv = double(tape.value(tv).scalar_value());
        b.total = double(tape.value(total).scalar_value());
        (void)w;
        return b;
    }
};

/// Builds the full weighted loss for a network output against the ground
/// truth. gt and mask are constants; gradients flow to i_out only.
template <typename T>
InpaintLossGraph<T> build_inpaint_loss(Tape<T>& tape, typename Tape<T>::Id i_out,
                                       const Tensor<T>& i_gt, const Tensor<T>& mask,
                                       const FeatureExtractor<T>& fx, const LossWeights& w) {
    check_loss_inputs(tape.value(i_out), i_gt, mask, "build_inpaint_loss");
    const Tensor<T>& out_v = tape.value(i_out);
    const double count = double(out_v.size());

    // Masks broadcast over channels at the image level; these images are
    // single channel so the mask tensors can be used directly.
    Tensor<T> valid_m = mask, hole_m = mask;
    for (std::size_t i = 0; i < hole_m.size(); ++i) hole_m[i] = T(1) - hole_m[i];
    Tensor<T> gt_valid = mul(i_gt, valid_m);

    InpaintLossGraph<T> g;
    auto diff = tape.sub_const(i_out, i_gt);
    g.masked = tape.scale(tape.l1_sum(tape.mul_const(diff, hole_m)), T(1.0 / count));
    g.valid = tape.scale(tape.l1_sum(tape.mul_const(diff, valid_m)), T(1.0 / count));

    auto comp = tape.add_const(tape.mul_const(i_out, hole_m), gt_valid);
    auto pyr_out = fx.extract_on_tape(tape, i_out);
    auto pyr_comp = fx.extract_on_tape(tape, comp);
    const FeaturePyramid<T> pyr_gt = fx.extract(i_gt);

    typename Tape<T>::Id perc = tape.input(Tensor<T>::scalar(T(0)), false);
    typename Tape<T>::Id style_out = perc, style_comp = perc; // zero seeds
    for (int p = 0; p < fx.levels(); ++p) {
        const Tensor<T>& gt_level = pyr_gt.levels[std::size_t(p)];
        const double level_count = double(gt_level.size());
        const double c = double(gt_level.c());
        const Tensor<T> gt_gram = gram(gt_level);

        auto d_out = tape.sub_const(pyr_out[std::size_t(p)], gt_level);
        auto d_comp = tape.sub_const(pyr_comp[std::size_t(p)], gt_level);
        auto term = tape.add(tape.scale(tape.l1_sum(d_out), T(1.0 / level_count)),
                             tape.scale(tape.l1_sum(d_comp), T(1.0 / level_count)));
        perc = p == 0 ? term : tape.add(perc, term);

        auto so = tape.scale(
            tape.l1_sum(tape.sub_const(tape_gram(tape, pyr_out[std::size_t(p)]), gt_gram)),
            T(1.0 / (c * c)));
        auto sc = tape.scale(
            tape.l1_sum(tape.sub_const(tape_gram(tape, pyr_comp[std::size_t(p)]), gt_gram)),
            T(1.0 / (c * c)));
        style_out = p == 0 ? so : tape.add(style_out, so);
        style_comp = p == 0 ? sc : tape.add(style_comp, sc);
    }
    g.perc = perc;
    g.style_out = style_out;
    g.style_comp = style_comp;
    g.tv = tape_tv(tape, comp, mask);

    g.total = tape.weighted_sum({{g.masked, w.w_masked},
                                 {g.valid, w.w_valid},
                                 {g.perc, w.w_perc},
                                 {g.style_out, w.w_style},
                                 {g.style_comp, w.w_style},
                                 {g.tv, w.w_tv}});
    return g;
}

} // namespace pconv
