#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "refsr/core/autograd.hpp"
#include "refsr/core/nn.hpp"
#include "refsr/core/rng.hpp"

namespace refsr {

// 4-neighbor bilinear read with zero contribution outside the feature bounds.
// Returns one value per channel.
inline std::vector<double> bilinear_sample(const Tensor& feat, double x, double y) {
    const int c = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
    std::vector<double> out(static_cast<size_t>(c), 0.0);
    if (!(std::isfinite(x) && std::isfinite(y)))
        throw domain_error("bilinear_sample: non-finite coord");
    if (x <= -1.0 || y <= -1.0 || x >= w || y >= h) return out;
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    const bool v00 = x0 >= 0 && y0 >= 0;
    const bool v01 = x0 + 1 < w && y0 >= 0;
    const bool v10 = x0 >= 0 && y0 + 1 < h;
    const bool v11 = x0 + 1 < w && y0 + 1 < h;
    for (int ch = 0; ch < c; ++ch) {
        double v = 0.0;
        if (v00) v += (1 - fy) * (1 - fx) * feat.at(ch, y0, x0);
        if (v01) v += (1 - fy) * fx * feat.at(ch, y0, x0 + 1);
        if (v10) v += fy * (1 - fx) * feat.at(ch, y0 + 1, x0);
        if (v11) v += fy * fx * feat.at(ch, y0 + 1, x0 + 1);
        out[static_cast<size_t>(ch)] = v;
    }
    return out;
}

// K learnable sampling offsets plus [0,1] modulation scalars per position.
// offsets: [2K,h,w], channels (2k, 2k+1) = (dx_k, dy_k); modulations: [K,h,w].
struct OffsetField {
    int k = 0;
    ad::Var offsets;
    ad::Var modulations;

    int height() const { return offsets.val().dim(1); }
    int width() const { return offsets.val().dim(2); }

    Vec2 offset_at(int tap, int y, int x) const {
        return {offsets.val().at(2 * tap, y, x), offsets.val().at(2 * tap + 1, y, x)};
    }
    double modulation_at(int tap, int y, int x) const { return modulations.val().at(tap, y, x); }
};

inline std::vector<std::pair<int, int>> square_taps(int k_side) {
    if (k_side < 1 || k_side % 2 == 0) throw config_error("tap pattern side must be odd");
    std::vector<std::pair<int, int>> taps;
    const int r = k_side / 2;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) taps.emplace_back(dx, dy);
    return taps;
}

// Per-tap dense weights over a base tap lattice (3x3 for K = 9).
struct AggregationKernel {
    int cin = 0, cout = 0, k_side = 3;
    std::vector<std::pair<int, int>> taps;  // (dx, dy)
    ad::Var w;                              // [cout, cin, K]

    AggregationKernel() = default;
    AggregationKernel(int cin_, int cout_, int k_side_, Rng& rng)
        : cin(cin_), cout(cout_), k_side(k_side_), taps(square_taps(k_side_)) {
        Tensor wt({cout, cin, static_cast<int>(taps.size())});
        const double std = nn::he_std(cin * static_cast<int>(taps.size()));
        for (std::int64_t i = 0; i < wt.size(); ++i) wt[i] = std * rng.normal();
        w = ad::Var(std::move(wt), true);
    }

    int k() const { return static_cast<int>(taps.size()); }

    void collect(const std::string& prefix, nn::ParamList& out) { out.push_back({prefix + ".w", w}); }
};

// y(p) = sum_k w_k * x(p + p0(p) + tap_k + dp_k(p)) * dm_k(p), with bilinear
// sampling at fractional coordinates and zero outside the reference bounds.
// p0 is a fixed displacement map [2,h,w] on the output lattice (the
// correspondence component of the offsets); it carries no gradient.
inline ad::Var deform_aggregate(const ad::Var& ref_feat, const Tensor& p0, const ad::Var& offsets,
                                const ad::Var& modulations, const ad::Var& kernel,
                                const std::vector<std::pair<int, int>>& taps) {
    const Tensor& X = ref_feat.val();
    const Tensor& W = kernel.val();
    const Tensor& O = offsets.val();
    const Tensor& M = modulations.val();
    const int cin = X.dim(0);
    const int cout = W.dim(0);
    const int K = static_cast<int>(taps.size());
    const int h = p0.dim(1), w = p0.dim(2);
    if (p0.rank() != 3 || p0.dim(0) != 2) throw contract_error("deform_aggregate: p0 must be [2,h,w]");
    if (W.rank() != 3 || W.dim(1) != cin || W.dim(2) != K)
        throw contract_error("deform_aggregate: kernel shape mismatch");
    if (O.rank() != 3 || O.dim(0) != 2 * K || O.dim(1) != h || O.dim(2) != w)
        throw contract_error("deform_aggregate: offsets shape mismatch");
    if (M.rank() != 3 || M.dim(0) != K || M.dim(1) != h || M.dim(2) != w)
        throw contract_error("deform_aggregate: modulations shape mismatch");
    if (!X.all_finite()) throw domain_error("deform_aggregate: non-finite reference feature");

    const int rh = X.dim(1), rw = X.dim(2);
    Tensor out({cout, h, w});
    // sampled[k][ci] cache per position is recomputed in backward; forward
    // stays allocation-light.
    std::vector<double> vals(static_cast<size_t>(cin));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int k = 0; k < K; ++k) {
                const double m = M.at(k, y, x);
                if (m == 0.0) continue;
                const double sx = x + p0.at(0, y, x) + taps[static_cast<size_t>(k)].first +
                                  O.at(2 * k, y, x);
                const double sy = y + p0.at(1, y, x) + taps[static_cast<size_t>(k)].second +
                                  O.at(2 * k + 1, y, x);
                if (sx <= -1.0 || sy <= -1.0 || sx >= rw || sy >= rh) continue;
                const int x0 = static_cast<int>(std::floor(sx));
                const int y0 = static_cast<int>(std::floor(sy));
                const double fx = sx - x0, fy = sy - y0;
                const bool v00 = x0 >= 0 && y0 >= 0;
                const bool v01 = x0 + 1 < rw && y0 >= 0;
                const bool v10 = x0 >= 0 && y0 + 1 < rh;
                const bool v11 = x0 + 1 < rw && y0 + 1 < rh;
                for (int ci = 0; ci < cin; ++ci) {
                    double v = 0.0;
                    if (v00) v += (1 - fy) * (1 - fx) * X.at(ci, y0, x0);
                    if (v01) v += (1 - fy) * fx * X.at(ci, y0, x0 + 1);
                    if (v10) v += fy * (1 - fx) * X.at(ci, y0 + 1, x0);
                    if (v11) v += fy * fx * X.at(ci, y0 + 1, x0 + 1);
                    vals[static_cast<size_t>(ci)] = v;
                }
                for (int co = 0; co < cout; ++co) {
                    const double* wrow = W.data() + (static_cast<size_t>(co) * cin) * K + k;
                    double acc = 0.0;
                    for (int ci = 0; ci < cin; ++ci) acc += wrow[static_cast<size_t>(ci) * K] * vals[static_cast<size_t>(ci)];
                    out.at(co, y, x) += acc * m;
                }
            }
        }
    }

    ad::Var xv = ref_feat, ov = offsets, mv = modulations, wv = kernel;
    Tensor p0c = p0;
    auto taps_c = taps;
    return ad::detail::make_op(
        std::move(out), {ref_feat, offsets, modulations, kernel},
        [xv, ov, mv, wv, p0c = std::move(p0c), taps_c = std::move(taps_c)](const ad::Var& gout) {
            if (ad::grad_mode()) throw contract_error("deform_aggregate: no double backward");
            const Tensor& X = xv.val();
            const Tensor& O = ov.val();
            const Tensor& M = mv.val();
            const Tensor& W = wv.val();
            const Tensor& G = gout.val();
            const int cin = X.dim(0), rh = X.dim(1), rw = X.dim(2);
            const int cout = W.dim(0);
            const int K = static_cast<int>(taps_c.size());
            const int h = G.dim(1), w = G.dim(2);
            Tensor gx = Tensor::zeros_like(X);
            Tensor go = Tensor::zeros_like(O);
            Tensor gm = Tensor::zeros_like(M);
            Tensor gw = Tensor::zeros_like(W);
            std::vector<double> vals(static_cast<size_t>(cin));
            std::vector<double> dvx(static_cast<size_t>(cin));
            std::vector<double> dvy(static_cast<size_t>(cin));
            std::vector<double> coeff(static_cast<size_t>(cin));
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    for (int k = 0; k < K; ++k) {
                        const double m = M.at(k, y, x);
                        const double sx = x + p0c.at(0, y, x) + taps_c[static_cast<size_t>(k)].first +
                                          O.at(2 * k, y, x);
                        const double sy = y + p0c.at(1, y, x) + taps_c[static_cast<size_t>(k)].second +
                                          O.at(2 * k + 1, y, x);
                        if (sx <= -1.0 || sy <= -1.0 || sx >= rw || sy >= rh) continue;
                        const int x0 = static_cast<int>(std::floor(sx));
                        const int y0 = static_cast<int>(std::floor(sy));
                        const double fx = sx - x0, fy = sy - y0;
                        const bool v00 = x0 >= 0 && y0 >= 0;
                        const bool v01 = x0 + 1 < rw && y0 >= 0;
                        const bool v10 = x0 >= 0 && y0 + 1 < rh;
                        const bool v11 = x0 + 1 < rw && y0 + 1 < rh;
                        for (int ci = 0; ci < cin; ++ci) {
                            const double x00 = v00 ? X.at(ci, y0, x0) : 0.0;
                            const double x01 = v01 ? X.at(ci, y0, x0 + 1) : 0.0;
                            const double x10 = v10 ? X.at(ci, y0 + 1, x0) : 0.0;
                            const double x11 = v11 ? X.at(ci, y0 + 1, x0 + 1) : 0.0;
                            vals[static_cast<size_t>(ci)] = (1 - fy) * ((1 - fx) * x00 + fx * x01) +
                                                            fy * ((1 - fx) * x10 + fx * x11);
                            dvx[static_cast<size_t>(ci)] = (1 - fy) * (x01 - x00) + fy * (x11 - x10);
                            dvy[static_cast<size_t>(ci)] = (1 - fx) * (x10 - x00) + fx * (x11 - x01);
                        }
                        double gmod = 0.0;
                        std::fill(coeff.begin(), coeff.end(), 0.0);
                        for (int co = 0; co < cout; ++co) {
                            const double gv = G.at(co, y, x);
                            if (gv == 0.0) continue;
                            const double* wrow = W.data() + (static_cast<size_t>(co) * cin) * K + k;
                            double* gwrow = gw.data() + (static_cast<size_t>(co) * cin) * K + k;
                            double dot = 0.0;
                            for (int ci = 0; ci < cin; ++ci) {
                                const double wv_ = wrow[static_cast<size_t>(ci) * K];
                                dot += wv_ * vals[static_cast<size_t>(ci)];
                                coeff[static_cast<size_t>(ci)] += gv * wv_;
                                gwrow[static_cast<size_t>(ci) * K] += gv * vals[static_cast<size_t>(ci)] * m;
                            }
                            gmod += gv * dot;
                        }
                        gm.at(k, y, x) += gmod;
                        if (m != 0.0) {
                            double gox = 0.0, goy = 0.0;
                            for (int ci = 0; ci < cin; ++ci) {
                                const double cm = coeff[static_cast<size_t>(ci)] * m;
                                if (cm == 0.0) continue;
                                gox += cm * dvx[static_cast<size_t>(ci)];
                                goy += cm * dvy[static_cast<size_t>(ci)];
                                if (v00) gx.at(ci, y0, x0) += cm * (1 - fy) * (1 - fx);
                                if (v01) gx.at(ci, y0, x0 + 1) += cm * (1 - fy) * fx;
                                if (v10) gx.at(ci, y0 + 1, x0) += cm * fy * (1 - fx);
                                if (v11) gx.at(ci, y0 + 1, x0 + 1) += cm * fy * fx;
                            }
                            go.at(2 * k, y, x) += gox;
                            go.at(2 * k + 1, y, x) += goy;
                        }
                    }
                }
            }
            return std::vector<ad::Var>{ad::Var(std::move(gx)), ad::Var(std::move(go)),
                                        ad::Var(std::move(gm)), ad::Var(std::move(gw))};
        },
        "deform_aggregate");
}

// Predicts the learnable offsets and modulation scalars from the input
// feature concatenated with the reference feature pre-gathered at p + p0.
// The final conv is zero-initialized, so the head starts at dp = 0, dm = 0.5.
struct OffsetHead {
    nn::Conv2dLayer c1, c2;
    int k = 9;
    double clamp_mag = 8.0;

    OffsetHead() = default;
    OffsetHead(int feat_ch, int mid_ch, int k_, Rng& rng, double clamp_mag_ = 8.0)
        : c1(2 * feat_ch, mid_ch, 3, 1, 1, rng), c2(mid_ch, 3 * k_, 3, 1, 1, rng), k(k_),
          clamp_mag(clamp_mag_) {
        c2.zero_init();
    }

    OffsetField operator()(const ad::Var& input_feat, const ad::Var& ref_gathered) const {
        if (!input_feat.val().same_shape(ref_gathered.val()))
            throw contract_error("predict_offsets: feature shapes differ");
        ad::Var t = c2(ad::relu(c1(ad::concat_ch({input_feat, ref_gathered}))));
        OffsetField f;
        f.k = k;
        f.offsets = ad::clamp(ad::slice_ch(t, 0, 2 * k), -clamp_mag, clamp_mag);
        f.modulations = ad::sigmoid(ad::slice_ch(t, 2 * k, 3 * k));
        return f;
    }

    void collect(const std::string& prefix, nn::ParamList& out) {
        c1.collect(prefix + ".c1", out);
        c2.collect(prefix + ".c2", out);
    }
};

}  // namespace refsr
