#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "refsr/core/adam.hpp"
#include "refsr/core/nn.hpp"
#include "refsr/data/synth.hpp"

namespace refsr {

struct FlowNetConfig {
    int levels = 3;
    int ch = 16;
    int lk_iters = 3;
};

namespace detail {

inline Tensor channel_mean(const Tensor& img) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor out({1, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h * w; ++i) out[i] += img[static_cast<std::int64_t>(ch) * h * w + i];
    for (int i = 0; i < h * w; ++i) out[i] /= c;
    return out;
}

inline Tensor warp_clamped(const Tensor& src, const Tensor& flow) {
    const int c = src.dim(0), h = flow.dim(1), w = flow.dim(2);
    Tensor out({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                out.at(ch, y, x) =
                    sample_clamped(src, ch, x + flow.at(0, y, x), y + flow.at(1, y, x));
    return out;
}

// One Lucas-Kanade increment: symmetric luma gradients, 7x7 box window,
// regularized 2x2 solve, per-level trust region of +-2 px.
inline Tensor lk_increment(const Tensor& a, const Tensor& b_warped) {
    const int h = a.dim(1), w = a.dim(2);
    const Tensor la = channel_mean(a);
    const Tensor lb = channel_mean(b_warped);
    Tensor gx({1, h, w}), gy({1, h, w}), dt({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
            const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
            gx.at(0, y, x) = 0.5 *
                             ((la.at(0, y, xp) - la.at(0, y, xm)) +
                              (lb.at(0, y, xp) - lb.at(0, y, xm))) /
                             (xp - xm);
            gy.at(0, y, x) = 0.5 *
                             ((la.at(0, yp, x) - la.at(0, ym, x)) +
                              (lb.at(0, yp, x) - lb.at(0, ym, x))) /
                             (yp - ym);
            dt.at(0, y, x) = lb.at(0, y, x) - la.at(0, y, x);
        }
    const auto boxsum = [&](const Tensor& u, const Tensor& v) {
        Tensor out({1, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0;
                for (int dy = -3; dy <= 3; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= h) continue;
                    for (int dx = -3; dx <= 3; ++dx) {
                        const int xx = x + dx;
                        if (xx < 0 || xx >= w) continue;
                        s += u.at(0, yy, xx) * v.at(0, yy, xx);
                    }
                }
                out.at(0, y, x) = s;
            }
        return out;
    };
    const Tensor sxx = boxsum(gx, gx), syy = boxsum(gy, gy), sxy = boxsum(gx, gy);
    const Tensor sxt = boxsum(gx, dt), syt = boxsum(gy, dt);
    Tensor delta({2, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double axx = sxx.at(0, y, x), ayy = syy.at(0, y, x), axy = sxy.at(0, y, x);
            const double bx = -sxt.at(0, y, x), by = -syt.at(0, y, x);
            const double lam = 1e-6 + 1e-3 * (axx + ayy);
            const double det = (axx + lam) * (ayy + lam) - axy * axy;
            const double fx = ((ayy + lam) * bx - axy * by) / det;
            const double fy = (-axy * bx + (axx + lam) * by) / det;
            delta.at(0, y, x) = std::clamp(fx, -2.0, 2.0);
            delta.at(1, y, x) = std::clamp(fy, -2.0, 2.0);
        }
    return delta;
}

}  // namespace detail

// Coarse-to-fine flow: each pyramid level runs a few parameter-free
// Lucas-Kanade increments, then a zero-initialized convolutional refiner adds
// a learnable residual. Untrained, the estimator is exactly pyramid LK;
// training only moves the residual nets.
struct FlowEstimator {
    FlowNetConfig cfg;
    struct LevelNet {
        nn::Conv2dLayer c1, c2, c3;
    };
    std::vector<LevelNet> nets;

    FlowEstimator() = default;

    FlowEstimator(const FlowNetConfig& cfg_, Rng& rng) : cfg(cfg_) {
        for (int l = 0; l < cfg.levels; ++l) {
            LevelNet n;
            n.c1 = nn::Conv2dLayer(8, cfg.ch, 3, 1, 1, rng);
            n.c2 = nn::Conv2dLayer(cfg.ch, cfg.ch, 3, 1, 1, rng);
            n.c3 = nn::Conv2dLayer(cfg.ch, 2, 3, 1, 1, rng);
            n.c3.zero_init();
            nets.push_back(std::move(n));
        }
    }

    // flow(p) is where frame a's content at p sits in frame b, in pixels.
    ad::Var estimate_var(const ad::Var& a, const ad::Var& b) const {
        if (!a.val().same_shape(b.val())) throw contract_error("estimate_flow: shape mismatch");
        const int h = a.val().dim(1), w = a.val().dim(2);
        const int div = 1 << (cfg.levels - 1);
        if (h % div || w % div)
            throw config_error("estimate_flow: size must be divisible by " + std::to_string(div));

        std::vector<Tensor> pyr_a{a.val()}, pyr_b{b.val()};
        {
            ad::NoGradGuard ng;
            for (int l = 1; l < cfg.levels; ++l) {
                pyr_a.push_back(nn::avg_pool2(ad::Var(pyr_a.back())).val());
                pyr_b.push_back(nn::avg_pool2(ad::Var(pyr_b.back())).val());
            }
        }

        ad::Var flow;
        for (int l = cfg.levels - 1; l >= 0; --l) {
            const Tensor& al = pyr_a[static_cast<size_t>(l)];
            const Tensor& bl = pyr_b[static_cast<size_t>(l)];
            const int lh = al.dim(1), lw = al.dim(2);
            if (!flow.defined())
                flow = ad::Var(Tensor({2, lh, lw}));
            else
                flow = ad::scale(nn::resize_bilinear(flow, lh, lw), 2.0);
            for (int it = 0; it < cfg.lk_iters; ++it) {
                const Tensor warped = detail::warp_clamped(bl, flow.val());
                flow = ad::add(flow, ad::Var(detail::lk_increment(al, warped)));
            }
            const Tensor warped = detail::warp_clamped(bl, flow.val());
            const auto& n = nets[static_cast<size_t>(l)];
            ad::Var inp = ad::concat_ch({ad::Var(al), ad::Var(warped), flow.detach()});
            ad::Var delta = n.c3(ad::relu(n.c2(ad::relu(n.c1(inp)))));
            flow = ad::add(flow, delta);
        }
        return flow;
    }

    nn::ParamList params(const std::string& prefix) {
        nn::ParamList out;
        for (size_t l = 0; l < nets.size(); ++l) {
            nets[l].c1.collect(prefix + ".l" + std::to_string(l) + ".c1", out);
            nets[l].c2.collect(prefix + ".l" + std::to_string(l) + ".c2", out);
            nets[l].c3.collect(prefix + ".l" + std::to_string(l) + ".c3", out);
        }
        return out;
    }
};

// Inference-path flow field, [2,H,W] with (dx, dy) channels.
inline Tensor estimate_flow(const Image& a, const Image& b, const FlowEstimator& est) {
    check_image(a, "estimate_flow");
    check_image(b, "estimate_flow");
    ad::NoGradGuard ng;
    return est.estimate_var(ad::Var(a), ad::Var(b)).val();
}

inline Tensor flow_warp(const Tensor& feat, const Tensor& flow) {
    ad::NoGradGuard ng;
    return nn::warp_bilinear(ad::Var(feat), ad::Var(flow)).val();
}

// Fine-tunes the residual refiners on procedurally textured translations
// (the LK core is parameter-free and needs no training).
inline void pretrain_flow_synthetic(FlowEstimator& est, int steps, std::uint64_t seed,
                                    double lr = 1e-3, int size = 32) {
    if (steps <= 0) return;
    Adam opt;
    opt.add_group(est.params("flow"), lr);
    Rng rng(seed ^ 0x666c6f77ULL);
    Tensor border_mask({2, size, size});
    for (int c = 0; c < 2; ++c)
        for (int y = 4; y < size - 4; ++y)
            for (int x = 4; x < size - 4; ++x) border_mask.at(c, y, x) = 1.0;

    for (int step = 0; step < steps; ++step) {
        const Image tex = render_texture(rng.next_u64(), size, size);
        const double dx = rng.uniform(-3.0, 3.0);
        const double dy = rng.uniform(-3.0, 3.0);
        Homography shift;
        shift.m = {1, 0, dx, 0, 1, dy, 0, 0, 1};
        const Image moved = warp_image(tex, shift);
        ad::Var flow = est.estimate_var(ad::Var(tex), ad::Var(moved));
        Tensor target({2, size, size});
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                target.at(0, y, x) = dx;
                target.at(1, y, x) = dy;
            }
        ad::Var loss =
            ad::mean_all(ad::mul_const(ad::square(ad::sub(flow, ad::Var(target))), border_mask));
        auto grads = ad::backward_collect(loss);
        opt.step(grads);
    }
}

}  // namespace refsr
