#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "refsr/core/image.hpp"
#include "refsr/data/manifest.hpp"
#include "refsr/match/correspondence.hpp"

namespace refsr {

enum class MetricMode { Y, RGB };

inline MetricMode metric_mode_from_string(const std::string& s) {
    if (s == "Y" || s == "y") return MetricMode::Y;
    if (s == "RGB" || s == "rgb") return MetricMode::RGB;
    throw config_error("unknown metric mode '" + s + "'");
}

namespace detail {

inline void check_metric_pair(const Image& a, const Image& b, const char* op) {
    check_image(a, op);
    check_image(b, op);
    if (!a.same_shape(b)) throw contract_error(std::string(op) + ": shape mismatch");
}

// Quantized planes (0..255 domain) to compare, per mode.
inline std::vector<Tensor> metric_planes(const Image& img, MetricMode mode) {
    const Tensor q = quantize_image(img);
    if (mode == MetricMode::Y) return {y_channel(q)};
    std::vector<Tensor> planes;
    const int h = q.dim(1), w = q.dim(2);
    for (int c = 0; c < q.dim(0); ++c) {
        Tensor plane({1, h, w});
        std::copy(q.data() + static_cast<std::int64_t>(c) * h * w,
                  q.data() + static_cast<std::int64_t>(c + 1) * h * w, plane.data());
        planes.push_back(std::move(plane));
    }
    return planes;
}

}  // namespace detail

// 10*log10(255^2 / MSE) over the quantized 8-bit domain; identical inputs
// report +infinity. Y mode uses the BT.601 full-swing luma.
inline double psnr(const Image& a, const Image& b, MetricMode mode) {
    detail::check_metric_pair(a, b, "psnr");
    const auto pa = detail::metric_planes(a, mode);
    const auto pb = detail::metric_planes(b, mode);
    double se = 0.0;
    std::int64_t n = 0;
    for (size_t i = 0; i < pa.size(); ++i) {
        for (std::int64_t j = 0; j < pa[i].size(); ++j) {
            const double d = pa[i][j] - pb[i][j];
            se += d * d;
        }
        n += pa[i].size();
    }
    const double mse = se / static_cast<double>(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace detail {

inline std::vector<double> gaussian_window_11() {
    std::vector<double> w(11);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        w[static_cast<size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
        sum += w[static_cast<size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// Separable Gaussian filtering over valid positions only (no padding):
// output is (h-10) x (w-10).
inline Tensor gauss_valid(const Tensor& plane, const std::vector<double>& k) {
    const int h = plane.dim(1), w = plane.dim(2);
    const int kw = static_cast<int>(k.size());
    Tensor mid({1, h, w - kw + 1});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + kw <= w; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kw; ++i) acc += k[static_cast<size_t>(i)] * plane.at(0, y, x + i);
            mid.at(0, y, x) = acc;
        }
    Tensor out({1, h - kw + 1, w - kw + 1});
    for (int y = 0; y + kw <= h; ++y)
        for (int x = 0; x < w - kw + 1; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kw; ++i) acc += k[static_cast<size_t>(i)] * mid.at(0, y + i, x);
            out.at(0, y, x) = acc;
        }
    return out;
}

inline double ssim_plane(const Tensor& pa, const Tensor& pb) {
    static const std::vector<double> k = gaussian_window_11();
    const int h = pa.dim(1), w = pa.dim(2);
    if (h < 11 || w < 11) throw contract_error("ssim: image smaller than the 11x11 window");
    const double C1 = (0.01 * 255) * (0.01 * 255);
    const double C2 = (0.03 * 255) * (0.03 * 255);

    Tensor aa({1, h, w}), bb({1, h, w}), ab({1, h, w});
    for (std::int64_t i = 0; i < pa.size(); ++i) {
        aa[i] = pa[i] * pa[i];
        bb[i] = pb[i] * pb[i];
        ab[i] = pa[i] * pb[i];
    }
    const Tensor mu_a = gauss_valid(pa, k);
    const Tensor mu_b = gauss_valid(pb, k);
    const Tensor m_aa = gauss_valid(aa, k);
    const Tensor m_bb = gauss_valid(bb, k);
    const Tensor m_ab = gauss_valid(ab, k);

    double total = 0.0;
    for (std::int64_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = m_aa[i] - ma * ma;
        const double vb = m_bb[i] - mb * mb;
        const double cov = m_ab[i] - ma * mb;
        total += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    return total / static_cast<double>(mu_a.size());
}

}  // namespace detail

// Structural similarity with an 11x11 Gaussian (sigma 1.5), K1 = 0.01,
// K2 = 0.03, mean over valid windows. RGB mode averages per-channel values.
inline double ssim(const Image& a, const Image& b, MetricMode mode) {
    detail::check_metric_pair(a, b, "ssim");
    const auto pa = detail::metric_planes(a, mode);
    const auto pb = detail::metric_planes(b, mode);
    double total = 0.0;
    for (size_t i = 0; i < pa.size(); ++i) total += detail::ssim_plane(pa[i], pb[i]);
    return total / static_cast<double>(pa.size());
}

// Average end-point error in grid cells over valid ground-truth cells.
inline double aee(const CorrespondenceField& pred, const GtField& gt) {
    if (pred.h != gt.h || pred.w != gt.w) throw contract_error("aee: lattice mismatch");
    double total = 0.0;
    std::int64_t n = 0;
    for (int i = 0; i < gt.h * gt.w; ++i) {
        if (!gt.valid[static_cast<size_t>(i)]) continue;
        const double dx = pred.target[static_cast<size_t>(i)].x - gt.target[static_cast<size_t>(i)].x;
        const double dy = pred.target[static_cast<size_t>(i)].y - gt.target[static_cast<size_t>(i)].y;
        total += std::sqrt(dx * dx + dy * dy);
        ++n;
    }
    if (n == 0) throw domain_error("aee: no valid ground-truth cells");
    return total / static_cast<double>(n);
}

}  // namespace refsr
