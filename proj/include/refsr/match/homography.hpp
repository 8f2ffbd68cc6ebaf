#pragma once

#include <array>
#include <cmath>
#include <string>

#include "refsr/core/image.hpp"
#include "refsr/core/rng.hpp"

namespace refsr {

// Planar projective transform, 3x3 row-major, normalized so m[8] == 1.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Vec2 apply(double x, double y) const {
        const double w = m[6] * x + m[7] * y + m[8];
        return {(m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w};
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    Homography inverse() const {
        const double d = det();
        if (std::fabs(d) < 1e-12) throw domain_error("homography not invertible");
        std::array<double, 9> a;
        a[0] = (m[4] * m[8] - m[5] * m[7]);
        a[1] = -(m[1] * m[8] - m[2] * m[7]);
        a[2] = (m[1] * m[5] - m[2] * m[4]);
        a[3] = -(m[3] * m[8] - m[5] * m[6]);
        a[4] = (m[0] * m[8] - m[2] * m[6]);
        a[5] = -(m[0] * m[5] - m[2] * m[3]);
        a[6] = (m[3] * m[7] - m[4] * m[6]);
        a[7] = -(m[0] * m[7] - m[1] * m[6]);
        a[8] = (m[0] * m[4] - m[1] * m[3]);
        Homography inv;
        for (int i = 0; i < 9; ++i) a[i] /= d;
        if (std::fabs(a[8]) < 1e-300) throw domain_error("homography inverse degenerate");
        for (int i = 0; i < 9; ++i) inv.m[i] = a[i] / a[8];
        return inv;
    }

    void normalize() {
        if (std::fabs(m[8]) < 1e-300) throw domain_error("homography normalization failed");
        for (int i = 0; i < 8; ++i) m[i] /= m[8];
        m[8] = 1.0;
    }

    // Solve from 4 point correspondences (8x8 linear system with h33 = 1,
    // Gaussian elimination with partial pivoting).
    static Homography from_points(const std::array<Vec2, 4>& src, const std::array<Vec2, 4>& dst) {
        double A[8][9] = {};
        for (int i = 0; i < 4; ++i) {
            const double x = src[i].x, y = src[i].y;
            const double u = dst[i].x, v = dst[i].y;
            double* r1 = A[2 * i];
            double* r2 = A[2 * i + 1];
            r1[0] = x; r1[1] = y; r1[2] = 1; r1[6] = -u * x; r1[7] = -u * y; r1[8] = u;
            r2[3] = x; r2[4] = y; r2[5] = 1; r2[6] = -v * x; r2[7] = -v * y; r2[8] = v;
        }
        for (int col = 0; col < 8; ++col) {
            int piv = col;
            for (int r = col + 1; r < 8; ++r)
                if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
            if (std::fabs(A[piv][col]) < 1e-12) throw domain_error("degenerate point configuration");
            if (piv != col)
                for (int c = 0; c < 9; ++c) std::swap(A[piv][c], A[col][c]);
            for (int r = 0; r < 8; ++r) {
                if (r == col) continue;
                const double f = A[r][col] / A[col][col];
                if (f == 0.0) continue;
                for (int c = col; c < 9; ++c) A[r][c] -= f * A[col][c];
            }
        }
        Homography h;
        for (int i = 0; i < 8; ++i) h.m[i] = A[i][8] / A[i][i];
        h.m[8] = 1.0;
        return h;
    }
};

struct HomographySampleConfig {
    double scale_min = 0.7, scale_max = 1.3;
    double rotation_min_deg = 0.0, rotation_max_deg = 30.0;  // magnitude range, random sign
    double jitter_frac = 0.15;                               // per-corner, of min(width, height)
    double translate_max = 0.0;                              // pixels, per axis
    int width = 160, height = 160;
};

namespace detail {

inline bool corners_convex(const std::array<Vec2, 4>& c) {
    for (int i = 0; i < 4; ++i) {
        const Vec2& a = c[i];
        const Vec2& b = c[(i + 1) % 4];
        const Vec2& d = c[(i + 2) % 4];
        const double cross = (b.x - a.x) * (d.y - b.y) - (b.y - a.y) * (d.x - b.x);
        if (cross <= 1e-9) return false;
    }
    return true;
}

}  // namespace detail

// Random scale * rotation * translation with perspective corner jitter, solved
// from the 4 corner correspondences. Degenerate draws are resampled.
inline Homography sample_homography(Rng& rng, const HomographySampleConfig& cfg) {
    const double W = cfg.width, H = cfg.height;
    const std::array<Vec2, 4> src = {Vec2{0, 0}, Vec2{W, 0}, Vec2{W, H}, Vec2{0, H}};
    const double cx = W / 2.0, cy = H / 2.0;
    const double jmax = cfg.jitter_frac * std::min(W, H);

    for (int attempt = 0; attempt < 100; ++attempt) {
        const double s = rng.uniform(cfg.scale_min, cfg.scale_max);
        double rot_deg = rng.uniform(cfg.rotation_min_deg, cfg.rotation_max_deg);
        if (rng.bernoulli(0.5)) rot_deg = -rot_deg;
        const double th = rot_deg * M_PI / 180.0;
        const double tx = cfg.translate_max > 0 ? rng.uniform(-cfg.translate_max, cfg.translate_max) : 0.0;
        const double ty = cfg.translate_max > 0 ? rng.uniform(-cfg.translate_max, cfg.translate_max) : 0.0;

        std::array<Vec2, 4> dst;
        for (int i = 0; i < 4; ++i) {
            const double dx = src[i].x - cx, dy = src[i].y - cy;
            double X = cx + s * (std::cos(th) * dx - std::sin(th) * dy) + tx;
            double Y = cy + s * (std::sin(th) * dx + std::cos(th) * dy) + ty;
            if (jmax > 0) {
                X += rng.uniform(-jmax, jmax);
                Y += rng.uniform(-jmax, jmax);
            }
            dst[i] = {X, Y};
        }
        if (!detail::corners_convex(dst)) continue;
        try {
            Homography h = Homography::from_points(src, dst);
            if (std::fabs(h.det()) < 1e-12) continue;
            h.inverse();  // must exist
            return h;
        } catch (const domain_error&) {
            continue;
        }
    }
    throw domain_error("sample_homography: degenerate corner configuration after 100 attempts");
}

// Ground-truth correspondence of a source grid cell. The cell center maps
// LR grid -> LR pixels (stride) -> HR pixels (scale_factor) -> homography ->
// reference grid (divide by reference stride, identical by construction).
inline Vec2 gt_correspondence(int cell_x, int cell_y, const Homography& h, int stride,
                              int scale_factor) {
    const double hr_x = static_cast<double>(cell_x) * stride * scale_factor;
    const double hr_y = static_cast<double>(cell_y) * stride * scale_factor;
    const Vec2 q = h.apply(hr_x, hr_y);
    return {q.x / stride, q.y / stride};
}

inline bool inside_grid(const Vec2& p, int grid_h, int grid_w) {
    return p.x >= 0.0 && p.y >= 0.0 && p.x <= grid_w - 1.0 && p.y <= grid_h - 1.0;
}

// Sample with clamp-to-edge bilinear interpolation.
inline double sample_clamped(const Image& img, int ch, double x, double y) {
    const int h = img.dim(1), w = img.dim(2);
    x = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
    y = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    return (1 - fy) * ((1 - fx) * img.at(ch, y0, x0) + fx * img.at(ch, y0, x1)) +
           fy * ((1 - fx) * img.at(ch, y1, x0) + fx * img.at(ch, y1, x1));
}

// Warped view: out(q) = src(H^-1(q)). Identity H reproduces src exactly.
inline Image warp_image(const Image& src, const Homography& h, int out_h = 0, int out_w = 0) {
    const Homography hinv = h.inverse();
    const int c = src.dim(0);
    if (out_h == 0) out_h = src.dim(1);
    if (out_w == 0) out_w = src.dim(2);
    Image out({c, out_h, out_w});
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const Vec2 p = hinv.apply(x, y);
            for (int ch = 0; ch < c; ++ch) out.at(ch, y, x) = sample_clamped(src, ch, p.x, p.y);
        }
    return out;
}

}  // namespace refsr
