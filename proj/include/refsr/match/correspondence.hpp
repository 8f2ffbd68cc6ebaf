#pragma once

#include <cmath>
#include <vector>

#include "refsr/core/autograd.hpp"
#include "refsr/data/resize.hpp"
#include "refsr/match/descriptor.hpp"
#include "refsr/match/homography.hpp"

namespace refsr {

// Best reference cell per input cell, with the normalized-dot similarity.
// Targets are reference-grid coordinates (x, y).
struct CorrespondenceField {
    int h = 0, w = 0;
    std::vector<Vec2> target;
    std::vector<double> score;

    int index(int i, int j) const { return i * w + j; }
};

// Row-stochastic matrix of temperature-softened descriptor similarities;
// row p is the distribution of input cell p over all reference cells.
struct CorrelationVolume {
    Tensor data;  // [N, M]
    double temperature = 0.0;
};

namespace detail {

inline void require_same_dim(const DescriptorGrid& a, const DescriptorGrid& b) {
    if (a.dim != b.dim)
        throw contract_error("descriptor dim mismatch: " + std::to_string(a.dim) + " vs " +
                             std::to_string(b.dim));
}

// Rows normalized to unit L2; zero rows stay zero.
inline Tensor normalized_rows(const Tensor& rows) {
    Tensor out = rows;
    const int n = rows.dim(0), d = rows.dim(1);
    for (int i = 0; i < n; ++i) {
        double* r = out.data() + static_cast<size_t>(i) * d;
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += r[j] * r[j];
        if (s > 0.0) {
            const double inv = 1.0 / std::sqrt(s);
            for (int j = 0; j < d; ++j) r[j] *= inv;
        }
    }
    return out;
}

}  // namespace detail

// Exhaustive argmax of normalized dot products; ties break to the lowest
// row-major reference index.
inline CorrespondenceField match(const DescriptorGrid& lr, const DescriptorGrid& ref) {
    detail::require_same_dim(lr, ref);
    if (ref.cells() == 0) throw contract_error("match: empty reference grid");
    const Tensor a = detail::normalized_rows(lr.data);
    const Tensor b = detail::normalized_rows(ref.data);
    const int n = lr.cells(), m = ref.cells(), d = lr.dim;

    CorrespondenceField field;
    field.h = lr.h;
    field.w = lr.w;
    field.target.resize(n);
    field.score.resize(n);
    for (int p = 0; p < n; ++p) {
        const double* ap = a.data() + static_cast<size_t>(p) * d;
        double best = -2.0;
        int best_q = 0;
        for (int q = 0; q < m; ++q) {
            const double* bq = b.data() + static_cast<size_t>(q) * d;
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += ap[j] * bq[j];
            if (s > best) {
                best = s;
                best_q = q;
            }
        }
        field.target[p] = {static_cast<double>(best_q % ref.w), static_cast<double>(best_q / ref.w)};
        field.score[p] = best;
    }
    return field;
}

// Graph-building correlation volume over descriptor rows: softmax over
// reference cells of (normalized dot / temperature).
inline ad::Var correlation_volume_var(const ad::Var& rows_a, const ad::Var& rows_b,
                                      double temperature) {
    if (temperature <= 0.0) throw domain_error("correlation volume: temperature must be > 0");
    if (rows_a.val().dim(1) != rows_b.val().dim(1))
        throw contract_error("correlation volume: descriptor dim mismatch");
    ad::Var na = ad::l2_normalize_rows(rows_a);
    ad::Var nb = ad::l2_normalize_rows(rows_b);
    ad::Var sim = ad::matmul(na, ad::transpose2d(nb));
    return ad::softmax_rows(sim, temperature);
}

inline CorrelationVolume correlation_volume(const DescriptorGrid& a, const DescriptorGrid& b,
                                            double temperature) {
    detail::require_same_dim(a, b);
    ad::NoGradGuard ng;
    CorrelationVolume vol;
    vol.data = correlation_volume_var(ad::Var(a.data), ad::Var(b.data), temperature).val();
    vol.temperature = temperature;
    return vol;
}

// ---------------------------------------------------------------------------
// Fixed-feature baseline: raw pixel patches on the bicubic-upsampled input,
// matched by NCC (mean-subtracted patches under the cosine of match()).

inline DescriptorGrid ncc_patch_descriptors(const Image& img, int stride = 4, int radius = 1) {
    check_image(img, "ncc_patch_descriptors");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int side = 2 * radius + 1;
    DescriptorGrid grid;
    grid.h = (h + stride - 1) / stride;
    grid.w = (w + stride - 1) / stride;
    grid.stride = stride;
    grid.dim = c * side * side;
    grid.data = Tensor({grid.h * grid.w, grid.dim});
    for (int i = 0; i < grid.h; ++i)
        for (int j = 0; j < grid.w; ++j) {
            double* dst = grid.data.data() + static_cast<size_t>(grid.index(i, j)) * grid.dim;
            const int cy = i * stride, cx = j * stride;
            int k = 0;
            double mean = 0.0;
            for (int ch = 0; ch < c; ++ch)
                for (int dy = -radius; dy <= radius; ++dy)
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const int y = std::min(std::max(cy + dy, 0), h - 1);
                        const int x = std::min(std::max(cx + dx, 0), w - 1);
                        dst[k] = img.at(ch, y, x);
                        mean += dst[k];
                        ++k;
                    }
            mean /= grid.dim;
            for (int t = 0; t < grid.dim; ++t) dst[t] -= mean;
        }
    return grid;
}

// ---------------------------------------------------------------------------
// Matcher interface: produces LR-grid -> reference-grid correspondences. The
// learned matcher and the fixed NCC baseline both implement it.

struct Matcher {
    virtual ~Matcher() = default;
    virtual CorrespondenceField correspond(const Image& lr, const Image& ref) const = 0;
};

struct ContrastiveMatcher final : Matcher {
    DescriptorEncoder input_enc;  // runs on the (LR) input image
    DescriptorEncoder ref_enc;    // runs on the (HR) reference image
    int patch_radius = 1;

    CorrespondenceField correspond(const Image& lr, const Image& ref) const override {
        DescriptorGrid a = patchify(extract_descriptors(lr, input_enc), patch_radius);
        DescriptorGrid b = patchify(extract_descriptors(ref, ref_enc), patch_radius);
        return match(a, b);
    }
};

struct NccMatcher final : Matcher {
    int scale_factor = 4;
    int stride = 4;
    int patch_radius = 1;

    // Input cells live on the LR stride-4 lattice (sampled at stride *
    // scale_factor on the bicubic-upsampled input); reference cells on the
    // reference's own stride-4 lattice. Same field semantics as the learned
    // matcher.
    CorrespondenceField correspond(const Image& lr, const Image& ref) const override {
        const Image up = bicubic_upsample(lr, scale_factor);
        DescriptorGrid a = ncc_patch_descriptors(up, stride * scale_factor, patch_radius);
        DescriptorGrid b = ncc_patch_descriptors(ref, stride, patch_radius);
        return match(a, b);
    }
};

// Displacement field on the matching lattice, in reference-grid units:
// d(p) = p' - r*p, where r*p is where cell p would sit in the reference grid
// if input and reference were aligned (r = scale_factor * stride_in / stride_ref;
// r = 4 for LR->HR matching, 1 for same-resolution matching).
inline Tensor displacement_field(const CorrespondenceField& field, int ratio) {
    Tensor d({2, field.h, field.w});
    for (int i = 0; i < field.h; ++i)
        for (int j = 0; j < field.w; ++j) {
            const Vec2& t = field.target[field.index(i, j)];
            d.at(0, i, j) = t.x - static_cast<double>(ratio) * j;
            d.at(1, i, j) = t.y - static_cast<double>(ratio) * i;
        }
    return d;
}

// Expand a matching-lattice displacement to an output lattice `scale` times
// finer than the reference-feature lattice it will index into. Values scale
// with the lattice; cells expand block-constant.
inline Tensor expand_displacement(const Tensor& disp, int block, double value_scale, int out_h,
                                  int out_w) {
    const int h = disp.dim(1), w = disp.dim(2);
    Tensor out({2, out_h, out_w});
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const int i = std::min(y / block, h - 1);
            const int j = std::min(x / block, w - 1);
            out.at(0, y, x) = value_scale * disp.at(0, i, j);
            out.at(1, y, x) = value_scale * disp.at(1, i, j);
        }
    return out;
}

}  // namespace refsr
