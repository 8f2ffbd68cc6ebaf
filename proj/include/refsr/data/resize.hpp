#pragma once

#include <cmath>
#include <vector>

#include "refsr/core/image.hpp"

namespace refsr {

// Keys cubic kernel with a = -0.5.
inline double cubic_kernel(double t) {
    const double a = -0.5;
    t = std::fabs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

namespace detail {

struct ResampleTap {
    int first = 0;
    std::vector<double> weights;  // normalized to sum 1
};

// Half-pixel-center mapping with the kernel support widened by the scale
// factor when downsampling (antialiasing); indices clamp to edges.
inline std::vector<ResampleTap> cubic_axis_taps(int in, int out, bool antialias) {
    const double scale = static_cast<double>(in) / out;
    const double kscale = (antialias && scale > 1.0) ? scale : 1.0;
    const double support = 2.0 * kscale;
    std::vector<ResampleTap> taps(out);
    for (int o = 0; o < out; ++o) {
        const double center = (o + 0.5) * scale - 0.5;
        const int lo = static_cast<int>(std::ceil(center - support));
        const int hi = static_cast<int>(std::floor(center + support));
        ResampleTap tap;
        tap.first = lo;
        tap.weights.resize(hi - lo + 1);
        double sum = 0.0;
        for (int i = lo; i <= hi; ++i) {
            const double w = cubic_kernel((center - i) / kscale);
            tap.weights[i - lo] = w;
            sum += w;
        }
        for (double& w : tap.weights) w /= sum;
        taps[o] = std::move(tap);
    }
    return taps;
}

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

}  // namespace detail

// Separable cubic resize (rows then columns). Antialiasing is applied on the
// downsampling axis only.
inline Image bicubic_resize(const Image& img, int out_h, int out_w, bool antialias = true) {
    check_image(img, "bicubic_resize");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const auto tx = detail::cubic_axis_taps(w, out_w, antialias);
    const auto ty = detail::cubic_axis_taps(h, out_h, antialias);

    Image mid({c, h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int ox = 0; ox < out_w; ++ox) {
                const auto& tap = tx[ox];
                double acc = 0.0;
                for (size_t k = 0; k < tap.weights.size(); ++k)
                    acc += tap.weights[k] *
                           img.at(ch, y, detail::clamp_index(tap.first + static_cast<int>(k), w));
                mid.at(ch, y, ox) = acc;
            }

    Image out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < out_h; ++oy) {
            const auto& tap = ty[oy];
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = 0.0;
                for (size_t k = 0; k < tap.weights.size(); ++k)
                    acc += tap.weights[k] *
                           mid.at(ch, detail::clamp_index(tap.first + static_cast<int>(k), h), ox);
                out.at(ch, oy, ox) = acc;
            }
        }
    return out;
}

// x4 degradation. Inputs whose sides are not divisible by the factor are
// pre-cropped at the top-left corner.
inline Image bicubic_downsample(const Image& hr, int factor = 4) {
    check_image(hr, "bicubic_downsample");
    Image src = hr;
    const int h = hr.dim(1) - hr.dim(1) % factor;
    const int w = hr.dim(2) - hr.dim(2) % factor;
    if (h != hr.dim(1) || w != hr.dim(2)) src = crop(hr, 0, 0, h, w);
    return bicubic_resize(src, h / factor, w / factor, true);
}

inline Image bicubic_upsample(const Image& lr, int factor = 4) {
    return bicubic_resize(lr, lr.dim(1) * factor, lr.dim(2) * factor, false);
}

}  // namespace refsr
