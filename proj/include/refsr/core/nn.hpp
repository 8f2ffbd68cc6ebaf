#pragma once

#include <string>
#include <vector>

#include "refsr/core/autograd.hpp"
#include "refsr/core/rng.hpp"
#include "refsr/core/tensor.hpp"

namespace refsr::nn {

using ad::Var;

// ---------------------------------------------------------------------------
// Convolution primitives.
//
// conv2d, conv2d_dinput and conv2d_dweight realize the three contractions of
// one trilinear form, so each one's backward pass is expressed through the
// other two. That closure is what makes gradients of gradients exact for
// convolutional graphs (used by the discriminator's gradient penalty).

namespace raw {

// Tap-loop formulation: one rank-1 row update per (ci, ky, kx) tap with a
// contiguous inner loop, so the compiler vectorizes the hot path.
inline Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != cin) throw contract_error("conv2d: channel mismatch");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw contract_error("conv2d: empty output");
    Tensor out({cout, ho, wo});
    const double* px = x.data();
    const double* pw = w.data();
    for (int co = 0; co < cout; ++co) {
        double* oc = out.data() + static_cast<size_t>(co) * ho * wo;
        for (int ci = 0; ci < cin; ++ci) {
            const double* xc = px + static_cast<size_t>(ci) * h * wd;
            const double* wc = pw + ((static_cast<size_t>(co) * cin + ci) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const double wt = wc[static_cast<size_t>(ky) * kw + kx];
                    if (wt == 0.0) continue;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        const double* xrow = xc + static_cast<size_t>(iy) * wd;
                        double* orow = oc + static_cast<size_t>(oy) * wo;
                        // valid ox range: 0 <= ox*stride - pad + kx < wd
                        int ox0 = 0;
                        while (ox0 * stride - pad + kx < 0) ++ox0;
                        int ox1 = wo;
                        while (ox1 > ox0 && (ox1 - 1) * stride - pad + kx >= wd) --ox1;
                        const double* xr = xrow + (static_cast<std::int64_t>(ox0) * stride - pad + kx);
                        if (stride == 1) {
                            for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wt * xr[ox - ox0];
                        } else {
                            for (int ox = ox0; ox < ox1; ++ox)
                                orow[ox] += wt * xr[static_cast<std::int64_t>(ox - ox0) * stride];
                        }
                    }
                }
            }
        }
    }
    return out;
}

inline Tensor conv2d_dinput(const Tensor& g, const Tensor& w, int stride, int pad, int h, int wd) {
    const int cout = w.dim(0), cin = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int ho = g.dim(1), wo = g.dim(2);
    Tensor out({cin, h, wd});
    const double* pg = g.data();
    const double* pw = w.data();
    for (int co = 0; co < cout; ++co) {
        const double* gc = pg + static_cast<size_t>(co) * ho * wo;
        for (int ci = 0; ci < cin; ++ci) {
            double* oc = out.data() + static_cast<size_t>(ci) * h * wd;
            const double* wc = pw + ((static_cast<size_t>(co) * cin + ci) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const double wt = wc[static_cast<size_t>(ky) * kw + kx];
                    if (wt == 0.0) continue;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        const double* grow = gc + static_cast<size_t>(oy) * wo;
                        double* orow = oc + static_cast<size_t>(iy) * wd;
                        int ox0 = 0;
                        while (ox0 * stride - pad + kx < 0) ++ox0;
                        int ox1 = wo;
                        while (ox1 > ox0 && (ox1 - 1) * stride - pad + kx >= wd) --ox1;
                        double* xr = orow + (static_cast<std::int64_t>(ox0) * stride - pad + kx);
                        if (stride == 1) {
                            for (int ox = ox0; ox < ox1; ++ox) xr[ox - ox0] += wt * grow[ox];
                        } else {
                            for (int ox = ox0; ox < ox1; ++ox)
                                xr[static_cast<std::int64_t>(ox - ox0) * stride] += wt * grow[ox];
                        }
                    }
                }
            }
        }
    }
    return out;
}

inline Tensor conv2d_dweight(const Tensor& g, const Tensor& x, int stride, int pad, int kh, int kw) {
    const int cout = g.dim(0), ho = g.dim(1), wo = g.dim(2);
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    Tensor out({cout, cin, kh, kw});
    const double* pg = g.data();
    const double* px = x.data();
    for (int co = 0; co < cout; ++co) {
        const double* gc = pg + static_cast<size_t>(co) * ho * wo;
        for (int ci = 0; ci < cin; ++ci) {
            const double* xc = px + static_cast<size_t>(ci) * h * wd;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    double acc = 0.0;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        const double* xrow = xc + static_cast<size_t>(iy) * wd;
                        const double* grow = gc + static_cast<size_t>(oy) * wo;
                        int ox0 = 0;
                        while (ox0 * stride - pad + kx < 0) ++ox0;
                        int ox1 = wo;
                        while (ox1 > ox0 && (ox1 - 1) * stride - pad + kx >= wd) --ox1;
                        const double* xr = xrow + (static_cast<std::int64_t>(ox0) * stride - pad + kx);
                        if (stride == 1) {
                            for (int ox = ox0; ox < ox1; ++ox) acc += grow[ox] * xr[ox - ox0];
                        } else {
                            for (int ox = ox0; ox < ox1; ++ox)
                                acc += grow[ox] * xr[static_cast<std::int64_t>(ox - ox0) * stride];
                        }
                    }
                    out.at(co, ci, ky, kx) = acc;
                }
            }
        }
    }
    return out;
}

}  // namespace raw

inline Var conv2d(const Var& x, const Var& w, int stride, int pad);
inline Var conv2d_dinput_op(const Var& g, const Var& w, int stride, int pad, int h, int wd);
inline Var conv2d_dweight_op(const Var& g, const Var& x, int stride, int pad, int kh, int kw);

inline Var conv2d(const Var& x, const Var& w, int stride, int pad) {
    Tensor out = raw::conv2d(x.val(), w.val(), stride, pad);
    const int h = x.val().dim(1), wd = x.val().dim(2);
    const int kh = w.val().dim(2), kw = w.val().dim(3);
    Var xv = x, wv = w;
    return ad::detail::make_op(
        std::move(out), {x, w},
        [xv, wv, stride, pad, h, wd, kh, kw](const Var& g) {
            Var gx, gw;
            if (xv.requires_grad() || ad::grad_mode())
                gx = conv2d_dinput_op(g, wv, stride, pad, h, wd);
            if (wv.requires_grad() || ad::grad_mode())
                gw = conv2d_dweight_op(g, xv, stride, pad, kh, kw);
            return std::vector<Var>{gx, gw};
        },
        "conv2d");
}

inline Var conv2d_dinput_op(const Var& g, const Var& w, int stride, int pad, int h, int wd) {
    Tensor out = raw::conv2d_dinput(g.val(), w.val(), stride, pad, h, wd);
    const int kh = w.val().dim(2), kw = w.val().dim(3);
    Var gv = g, wv = w;
    return ad::detail::make_op(
        std::move(out), {g, w},
        [gv, wv, stride, pad, kh, kw](const Var& s) {
            return std::vector<Var>{conv2d(s, wv, stride, pad),
                                    conv2d_dweight_op(gv, s, stride, pad, kh, kw)};
        },
        "conv2d_dinput");
}

inline Var conv2d_dweight_op(const Var& g, const Var& x, int stride, int pad, int kh, int kw) {
    Tensor out = raw::conv2d_dweight(g.val(), x.val(), stride, pad, kh, kw);
    const int h = x.val().dim(1), wd = x.val().dim(2);
    Var gv = g, xv = x;
    return ad::detail::make_op(
        std::move(out), {g, x},
        [gv, xv, stride, pad, h, wd](const Var& t) {
            return std::vector<Var>{conv2d(xv, t, stride, pad),
                                    conv2d_dinput_op(gv, t, stride, pad, h, wd)};
        },
        "conv2d_dweight");
}

// ---------------------------------------------------------------------------
// Channel bias

inline Var sum_hw(const Var& x);
inline Var broadcast_hw(const Var& b, int h, int w);

inline Var add_bias_ch(const Var& x, const Var& b) {
    const int c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    if (b.val().rank() != 1 || b.val().dim(0) != c)
        throw contract_error("add_bias_ch: bias shape mismatch");
    Tensor out = x.val();
    for (int ch = 0; ch < c; ++ch) {
        double* p = out.data() + static_cast<size_t>(ch) * h * w;
        const double bv = b.val()[ch];
        for (int i = 0; i < h * w; ++i) p[i] += bv;
    }
    return ad::detail::make_op(std::move(out), {x, b},
                               [](const Var& g) {
                                   return std::vector<Var>{g, sum_hw(g)};
                               },
                               "add_bias_ch");
}

inline Var sum_hw(const Var& x) {
    const int c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    Tensor out({c});
    for (int ch = 0; ch < c; ++ch) {
        const double* p = x.val().data() + static_cast<size_t>(ch) * h * w;
        double s = 0.0;
        for (int i = 0; i < h * w; ++i) s += p[i];
        out[ch] = s;
    }
    return ad::detail::make_op(std::move(out), {x},
                               [h, w](const Var& g) {
                                   return std::vector<Var>{broadcast_hw(g, h, w)};
                               },
                               "sum_hw");
}

inline Var broadcast_hw(const Var& b, int h, int w) {
    const int c = b.val().dim(0);
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        double* p = out.data() + static_cast<size_t>(ch) * h * w;
        std::fill(p, p + h * w, b.val()[ch]);
    }
    return ad::detail::make_op(std::move(out), {b},
                               [](const Var& g) { return std::vector<Var>{sum_hw(g)}; },
                               "broadcast_hw");
}

// ---------------------------------------------------------------------------
// Depth-to-space (and inverse): pure channel/space permutation.

inline Var pixel_unshuffle(const Var& x, int r);

inline Var pixel_shuffle(const Var& x, int r) {
    const int c4 = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    if (c4 % (r * r) != 0) throw contract_error("pixel_shuffle: channels not divisible by r^2");
    const int c = c4 / (r * r);
    Tensor out({c, h * r, w * r});
    const double* px = x.val().data();
    double* po = out.data();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h * r; ++y)
            for (int xx = 0; xx < w * r; ++xx) {
                const int src_ch = ch * r * r + (y % r) * r + (xx % r);
                po[(static_cast<size_t>(ch) * h * r + y) * (w * r) + xx] =
                    px[(static_cast<size_t>(src_ch) * h + y / r) * w + xx / r];
            }
    return ad::detail::make_op(std::move(out), {x},
                               [r](const Var& g) {
                                   return std::vector<Var>{pixel_unshuffle(g, r)};
                               },
                               "pixel_shuffle");
}

inline Var pixel_unshuffle(const Var& x, int r) {
    const int c = x.val().dim(0), hr = x.val().dim(1), wr = x.val().dim(2);
    if (hr % r != 0 || wr % r != 0) throw contract_error("pixel_unshuffle: size not divisible");
    const int h = hr / r, w = wr / r;
    Tensor out({c * r * r, h, w});
    const double* px = x.val().data();
    double* po = out.data();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < hr; ++y)
            for (int xx = 0; xx < wr; ++xx) {
                const int dst_ch = ch * r * r + (y % r) * r + (xx % r);
                po[(static_cast<size_t>(dst_ch) * h + y / r) * w + xx / r] =
                    px[(static_cast<size_t>(ch) * hr + y) * wr + xx];
            }
    return ad::detail::make_op(std::move(out), {x},
                               [r](const Var& g) {
                                   return std::vector<Var>{pixel_shuffle(g, r)};
                               },
                               "pixel_unshuffle");
}

// ---------------------------------------------------------------------------
// 2x average pooling (used by the flow pyramid).

inline Var avg_pool2_adjoint(const Var& g);

inline Var avg_pool2(const Var& x) {
    const int c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    if (h % 2 || w % 2) throw contract_error("avg_pool2: odd size");
    Tensor out({c, h / 2, w / 2});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h / 2; ++y)
            for (int xx = 0; xx < w / 2; ++xx)
                out.at(ch, y, xx) = 0.25 * (x.val().at(ch, 2 * y, 2 * xx) +
                                            x.val().at(ch, 2 * y + 1, 2 * xx) +
                                            x.val().at(ch, 2 * y, 2 * xx + 1) +
                                            x.val().at(ch, 2 * y + 1, 2 * xx + 1));
    return ad::detail::make_op(std::move(out), {x},
                               [](const Var& g) {
                                   return std::vector<Var>{avg_pool2_adjoint(g)};
                               },
                               "avg_pool2");
}

inline Var avg_pool2_adjoint(const Var& g) {
    const int c = g.val().dim(0), h = g.val().dim(1), w = g.val().dim(2);
    Tensor out({c, h * 2, w * 2});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                out.at(ch, y, xx) = 0.25 * g.val().at(ch, y / 2, xx / 2);
    return ad::detail::make_op(std::move(out), {g},
                               [](const Var& s) { return std::vector<Var>{avg_pool2(s)}; },
                               "avg_pool2_adjoint");
}

// ---------------------------------------------------------------------------
// Bilinear resize with half-pixel centers and edge clamping.

namespace raw {

struct ResizePlan {
    std::vector<int> i0, i1;
    std::vector<double> w1;  // weight of i1; weight of i0 is 1-w1
};

inline ResizePlan resize_axis_plan(int in, int out) {
    ResizePlan p;
    p.i0.resize(out);
    p.i1.resize(out);
    p.w1.resize(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double s = (o + 0.5) * scale - 0.5;
        if (s < 0) s = 0;
        if (s > in - 1) s = in - 1;
        const int lo = static_cast<int>(std::floor(s));
        p.i0[o] = lo;
        p.i1[o] = std::min(lo + 1, in - 1);
        p.w1[o] = s - lo;
    }
    return p;
}

}  // namespace raw

inline Var resize_bilinear_adjoint(const Var& g, int ih, int iw);

inline Var resize_bilinear(const Var& x, int oh, int ow) {
    const int c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    auto py = raw::resize_axis_plan(h, oh);
    auto px = raw::resize_axis_plan(w, ow);
    Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch) {
        const double* src = x.val().data() + static_cast<size_t>(ch) * h * w;
        double* dst = out.data() + static_cast<size_t>(ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            const double* r0 = src + static_cast<size_t>(py.i0[oy]) * w;
            const double* r1 = src + static_cast<size_t>(py.i1[oy]) * w;
            const double wy = py.w1[oy];
            for (int ox = 0; ox < ow; ++ox) {
                const double wx = px.w1[ox];
                const double top = r0[px.i0[ox]] * (1 - wx) + r0[px.i1[ox]] * wx;
                const double bot = r1[px.i0[ox]] * (1 - wx) + r1[px.i1[ox]] * wx;
                dst[static_cast<size_t>(oy) * ow + ox] = top * (1 - wy) + bot * wy;
            }
        }
    }
    return ad::detail::make_op(std::move(out), {x},
                               [h, w](const Var& g) {
                                   return std::vector<Var>{resize_bilinear_adjoint(g, h, w)};
                               },
                               "resize_bilinear");
}

inline Var resize_bilinear_adjoint(const Var& g, int ih, int iw) {
    const int c = g.val().dim(0), oh = g.val().dim(1), ow = g.val().dim(2);
    auto py = raw::resize_axis_plan(ih, oh);
    auto px = raw::resize_axis_plan(iw, ow);
    Tensor out({c, ih, iw});
    for (int ch = 0; ch < c; ++ch) {
        double* dst = out.data() + static_cast<size_t>(ch) * ih * iw;
        const double* src = g.val().data() + static_cast<size_t>(ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            const double wy = py.w1[oy];
            for (int ox = 0; ox < ow; ++ox) {
                const double wx = px.w1[ox];
                const double gv = src[static_cast<size_t>(oy) * ow + ox];
                dst[static_cast<size_t>(py.i0[oy]) * iw + px.i0[ox]] += gv * (1 - wy) * (1 - wx);
                dst[static_cast<size_t>(py.i0[oy]) * iw + px.i1[ox]] += gv * (1 - wy) * wx;
                dst[static_cast<size_t>(py.i1[oy]) * iw + px.i0[ox]] += gv * wy * (1 - wx);
                dst[static_cast<size_t>(py.i1[oy]) * iw + px.i1[ox]] += gv * wy * wx;
            }
        }
    }
    return ad::detail::make_op(std::move(out), {g},
                               [oh, ow](const Var& s) {
                                   return std::vector<Var>{resize_bilinear(s, oh, ow)};
                               },
                               "resize_bilinear_adjoint");
}

// ---------------------------------------------------------------------------
// Backward warping by a dense flow field. flow is [2,h,w] with channel 0 = dx
// and channel 1 = dy, in pixels; the flow lattice defines the output lattice
// (it may differ from the feature's). Samples outside the feature bounds
// contribute zero.

inline Var warp_bilinear(const Var& feat, const Var& flow) {
    const Tensor& X = feat.val();
    const Tensor& F = flow.val();
    const int c = X.dim(0);
    const int fh = X.dim(1), fw = X.dim(2);
    if (F.rank() != 3 || F.dim(0) != 2) throw contract_error("warp_bilinear: flow must be [2,h,w]");
    const int h = F.dim(1), w = F.dim(2);
    Tensor out({c, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = x + F.at(0, y, x);
            const double sy = y + F.at(1, y, x);
            if (sx <= -1.0 || sy <= -1.0 || sx >= fw || sy >= fh) continue;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            const bool v00 = x0 >= 0 && y0 >= 0;
            const bool v01 = x0 + 1 < fw && y0 >= 0;
            const bool v10 = x0 >= 0 && y0 + 1 < fh;
            const bool v11 = x0 + 1 < fw && y0 + 1 < fh;
            for (int ch = 0; ch < c; ++ch) {
                double v = 0.0;
                if (v00) v += (1 - fy) * (1 - fx) * X.at(ch, y0, x0);
                if (v01) v += (1 - fy) * fx * X.at(ch, y0, x0 + 1);
                if (v10) v += fy * (1 - fx) * X.at(ch, y0 + 1, x0);
                if (v11) v += fy * fx * X.at(ch, y0 + 1, x0 + 1);
                out.at(ch, y, x) = v;
            }
        }
    }
    Var featv = feat, flowv = flow;
    return ad::detail::make_op(
        std::move(out), {feat, flow},
        [featv, flowv](const Var& g) {
            if (ad::grad_mode()) throw contract_error("warp_bilinear: no double backward");
            const Tensor& X = featv.val();
            const Tensor& F = flowv.val();
            const Tensor& G = g.val();
            const int c = X.dim(0);
            const int fh = X.dim(1), fw = X.dim(2);
            const int h = F.dim(1), w = F.dim(2);
            Tensor gx = Tensor::zeros_like(X);
            Tensor gf = Tensor::zeros_like(F);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const double sx = x + F.at(0, y, x);
                    const double sy = y + F.at(1, y, x);
                    if (sx <= -1.0 || sy <= -1.0 || sx >= fw || sy >= fh) continue;
                    const int x0 = static_cast<int>(std::floor(sx));
                    const int y0 = static_cast<int>(std::floor(sy));
                    const double fx = sx - x0, fy = sy - y0;
                    const bool v00 = x0 >= 0 && y0 >= 0;
                    const bool v01 = x0 + 1 < fw && y0 >= 0;
                    const bool v10 = x0 >= 0 && y0 + 1 < fh;
                    const bool v11 = x0 + 1 < fw && y0 + 1 < fh;
                    double ddx = 0.0, ddy = 0.0;
                    for (int ch = 0; ch < c; ++ch) {
                        const double gv = G.at(ch, y, x);
                        if (gv == 0.0) continue;
                        const double x00 = v00 ? X.at(ch, y0, x0) : 0.0;
                        const double x01 = v01 ? X.at(ch, y0, x0 + 1) : 0.0;
                        const double x10 = v10 ? X.at(ch, y0 + 1, x0) : 0.0;
                        const double x11 = v11 ? X.at(ch, y0 + 1, x0 + 1) : 0.0;
                        if (v00) gx.at(ch, y0, x0) += gv * (1 - fy) * (1 - fx);
                        if (v01) gx.at(ch, y0, x0 + 1) += gv * (1 - fy) * fx;
                        if (v10) gx.at(ch, y0 + 1, x0) += gv * fy * (1 - fx);
                        if (v11) gx.at(ch, y0 + 1, x0 + 1) += gv * fy * fx;
                        ddx += gv * ((1 - fy) * (x01 - x00) + fy * (x11 - x10));
                        ddy += gv * ((1 - fx) * (x10 - x00) + fx * (x11 - x01));
                    }
                    gf.at(0, y, x) = ddx;
                    gf.at(1, y, x) = ddy;
                }
            }
            return std::vector<Var>{Var(std::move(gx)), Var(std::move(gf))};
        },
        "warp_bilinear");
}

// ---------------------------------------------------------------------------
// Layers

struct Param {
    std::string name;
    Var var;
};
using ParamList = std::vector<Param>;

inline double he_std(int fan_in) { return std::sqrt(2.0 / fan_in); }

struct Conv2dLayer {
    Var w, b;
    int stride = 1, pad = 1;
    bool has_bias = true;

    Conv2dLayer() = default;

    Conv2dLayer(int cin, int cout, int k, int stride_, int pad_, Rng& rng, double gain = 1.0)
        : stride(stride_), pad(pad_) {
        Tensor wt({cout, cin, k, k});
        const double std = gain * he_std(cin * k * k);
        for (std::int64_t i = 0; i < wt.size(); ++i) wt[i] = std * rng.normal();
        w = Var(std::move(wt), true);
        b = Var(Tensor({cout}), true);
    }

    void zero_init() {
        w.mutable_val() = Tensor::zeros_like(w.val());
        b.mutable_val() = Tensor::zeros_like(b.val());
    }

    Var operator()(const Var& x) const {
        Var y = conv2d(x, w, stride, pad);
        return has_bias ? add_bias_ch(y, b) : y;
    }

    void collect(const std::string& prefix, ParamList& out) {
        out.push_back({prefix + ".w", w});
        if (has_bias) out.push_back({prefix + ".b", b});
    }
};

struct ResBlock {
    Conv2dLayer c1, c2;

    ResBlock() = default;
    ResBlock(int ch, Rng& rng) : c1(ch, ch, 3, 1, 1, rng), c2(ch, ch, 3, 1, 1, rng) {}

    Var operator()(const Var& x) const { return ad::add(x, c2(ad::relu(c1(x)))); }

    void collect(const std::string& prefix, ParamList& out) {
        c1.collect(prefix + ".c1", out);
        c2.collect(prefix + ".c2", out);
    }
};

inline void set_requires_grad(ParamList& params, bool v) {
    for (auto& p : params) p.var.node()->requires_grad = v;
}

inline std::int64_t param_count(const ParamList& params) {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.var.val().size();
    return n;
}

}  // namespace refsr::nn
