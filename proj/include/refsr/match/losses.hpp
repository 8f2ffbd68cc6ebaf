#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "refsr/core/autograd.hpp"
#include "refsr/match/correspondence.hpp"

namespace refsr {

struct ContrastiveLossConfig {
    double margin = 1.0;      // m
    double threshold = 4.0;   // T, L-inf exclusion radius in grid cells
    double temperature = 0.15;
    double kl_weight = 15.0;  // alpha_kl
    int batch_size = 8;
    double learning_rate = 1e-3;

    void validate() const {
        if (margin <= 0.0) throw domain_error("margin must be > 0");
        if (threshold < 0.0) throw domain_error("threshold must be >= 0");
        if (temperature <= 0.0) throw domain_error("temperature must be > 0");
        if (kl_weight < 0.0) throw domain_error("kl_weight must be >= 0");
    }
};

// One mined triplet, exposed for instrumentation in tests.
struct TripletPick {
    int p;          // input cell (row-major)
    int pos;        // ground-truth reference cell
    int neg_index;  // hardest negative cell index
    bool neg_in_ref;  // true: negative drawn from the reference grid,
                      // false: from the input grid (anchored at f_p')
};

struct TripletLossResult {
    ad::Var loss;
    std::vector<TripletPick> picks;
    int valid_points = 0;
};

// Margin ranking loss over L2-normalized descriptors:
//   mean over valid p of max(0, m + |f_p - f_p'|^2 - Neg(p))
// Distances are squared L2 between unit-normalized descriptors (matching the
// normalization of the correspondence argmax; training raw descriptors from
// random initialization collapses all norms toward zero). Neg(p) is the
// smaller of the hardest negative in the reference grid (excluding the L-inf
// ball of radius T around p') and the hardest negative in the input grid
// (excluding the ball around p). Ties prefer the reference branch, and within
// a branch the lowest row-major index.
inline TripletLossResult triplet_margin_loss(const ad::Var& desc_in_raw, int in_h, int in_w,
                                             const ad::Var& desc_ref_raw, int ref_h, int ref_w,
                                             const std::vector<int>& gt_ref_index,
                                             const ContrastiveLossConfig& cfg) {
    cfg.validate();
    if (desc_in_raw.val().rank() != 2 || desc_ref_raw.val().rank() != 2 ||
        desc_in_raw.val().dim(1) != desc_ref_raw.val().dim(1))
        throw contract_error("triplet_margin_loss: descriptor shape mismatch");
    if (!desc_in_raw.val().all_finite() || !desc_ref_raw.val().all_finite())
        throw domain_error("triplet_margin_loss: non-finite descriptors");
    const ad::Var desc_in = ad::l2_normalize_rows(desc_in_raw);
    const ad::Var desc_ref = ad::l2_normalize_rows(desc_ref_raw);
    const Tensor& A = desc_in.val();
    const Tensor& B = desc_ref.val();
    const int n = A.dim(0), m = B.dim(0), d = A.dim(1);
    if (n != in_h * in_w || m != ref_h * ref_w)
        throw contract_error("triplet_margin_loss: grid dims inconsistent with rows");

    // Cross squared-distance matrix D[p][q] = |f_p - f_q|^2.
    Tensor dist({n, m});
    for (int p = 0; p < n; ++p) {
        const double* ap = A.data() + static_cast<size_t>(p) * d;
        double* drow = dist.data() + static_cast<size_t>(p) * m;
        for (int q = 0; q < m; ++q) {
            const double* bq = B.data() + static_cast<size_t>(q) * d;
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                const double t = ap[j] - bq[j];
                s += t * t;
            }
            drow[q] = s;
        }
    }

    const double T = cfg.threshold;
    const double inf = std::numeric_limits<double>::infinity();

    struct Entry {
        int p, pp, qref, kin;  // -1 when that branch has no candidates
        double dref, din;
    };
    std::vector<Entry> entries;
    for (int p = 0; p < n; ++p) {
        const int pp = gt_ref_index[static_cast<size_t>(p)];
        if (pp < 0) continue;
        const int px = p % in_w, py = p / in_w;
        const int ppx = pp % ref_w, ppy = pp / ref_w;

        double best_ref = inf;
        int best_ref_q = -1;
        const double* drow = dist.data() + static_cast<size_t>(p) * m;
        for (int q = 0; q < m; ++q) {
            const int qx = q % ref_w, qy = q / ref_w;
            if (std::max(std::abs(qx - ppx), std::abs(qy - ppy)) <= T) continue;
            if (drow[q] < best_ref) {
                best_ref = drow[q];
                best_ref_q = q;
            }
        }

        double best_in = inf;
        int best_in_k = -1;
        for (int k = 0; k < n; ++k) {
            const int kx = k % in_w, ky = k / in_w;
            if (std::max(std::abs(kx - px), std::abs(ky - py)) <= T) continue;
            const double v = dist.data()[static_cast<size_t>(k) * m + pp];
            if (v < best_in) {
                best_in = v;
                best_in_k = k;
            }
        }
        entries.push_back({p, pp, best_ref_q, best_in_k, best_ref, best_in});
    }

    if (entries.empty()) throw domain_error("triplet_margin_loss: no valid ground-truth points");
    bool any_negative = false;
    for (const auto& e : entries)
        if (e.qref >= 0 || e.kin >= 0) any_negative = true;
    if (!any_negative)
        throw domain_error("triplet_margin_loss: threshold T=" + std::to_string(T) +
                           " excludes every negative candidate");

    // Partition by which negative branches exist, then assemble with gathers.
    std::vector<int> both_p, both_pp, both_q, both_k;
    std::vector<int> refonly_p, refonly_pp, refonly_q;
    std::vector<int> inonly_p, inonly_pp, inonly_k;
    TripletLossResult result;
    result.valid_points = static_cast<int>(entries.size());
    for (const auto& e : entries) {
        if (e.qref >= 0 && e.kin >= 0) {
            both_p.push_back(e.p);
            both_pp.push_back(e.pp);
            both_q.push_back(e.qref);
            both_k.push_back(e.kin);
            const bool ref_wins = e.dref <= e.din;
            result.picks.push_back({e.p, e.pp, ref_wins ? e.qref : e.kin, ref_wins});
        } else if (e.qref >= 0) {
            refonly_p.push_back(e.p);
            refonly_pp.push_back(e.pp);
            refonly_q.push_back(e.qref);
            result.picks.push_back({e.p, e.pp, e.qref, true});
        } else if (e.kin >= 0) {
            inonly_p.push_back(e.p);
            inonly_pp.push_back(e.pp);
            inonly_k.push_back(e.kin);
            result.picks.push_back({e.p, e.pp, e.kin, false});
        } else {
            throw domain_error("triplet_margin_loss: point with no negatives (T=" +
                               std::to_string(T) + ")");
        }
    }

    using namespace ad;
    const auto sqdist_rows = [](const Var& x, const Var& y) { return rowsum(square(sub(x, y))); };
    const auto hinge_sum = [&](const Var& pos, const Var& negv) {
        return sum_all(relu(add_scalar(sub(pos, negv), cfg.margin)));
    };

    Var total;
    const auto accumulate = [&](const Var& v) { total = total.defined() ? add(total, v) : v; };

    if (!both_p.empty()) {
        Var pos = sqdist_rows(gather_rows(desc_in, both_p), gather_rows(desc_ref, both_pp));
        Var neg_ref = sqdist_rows(gather_rows(desc_in, both_p), gather_rows(desc_ref, both_q));
        Var neg_in = sqdist_rows(gather_rows(desc_ref, both_pp), gather_rows(desc_in, both_k));
        // min(a, b) with ties resolved toward the reference branch
        Var neg = sub(neg_ref, relu(sub(neg_ref, neg_in)));
        accumulate(hinge_sum(pos, neg));
    }
    if (!refonly_p.empty()) {
        Var pos = sqdist_rows(gather_rows(desc_in, refonly_p), gather_rows(desc_ref, refonly_pp));
        Var neg = sqdist_rows(gather_rows(desc_in, refonly_p), gather_rows(desc_ref, refonly_q));
        accumulate(hinge_sum(pos, neg));
    }
    if (!inonly_p.empty()) {
        Var pos = sqdist_rows(gather_rows(desc_in, inonly_p), gather_rows(desc_ref, inonly_pp));
        Var neg = sqdist_rows(gather_rows(desc_ref, inonly_pp), gather_rows(desc_in, inonly_k));
        accumulate(hinge_sum(pos, neg));
    }

    result.loss = scale(total, 1.0 / static_cast<double>(entries.size()));
    return result;
}

// KL divergence from a fixed teacher volume to the student volume, averaged
// over input cells. Student entries are clamped at 1e-12 before the log.
inline ad::Var correlation_kl_loss(const Tensor& teacher, const ad::Var& student) {
    if (!teacher.same_shape(student.val()))
        throw contract_error("correlation_kl_loss: volume shape mismatch " +
                             Tensor::shape_str(teacher.shape()) + " vs " +
                             Tensor::shape_str(student.val().shape()));
    const int n = teacher.dim(0);
    double const_term = 0.0;
    for (std::int64_t i = 0; i < teacher.size(); ++i)
        if (teacher[i] > 0.0) const_term += teacher[i] * std::log(teacher[i]);

    using namespace ad;
    Var log_s = log_v(clamp_min(student, 1e-12));
    Var cross = sum_all(mul_const(log_s, teacher));
    return scale(add_scalar(neg(cross), const_term), 1.0 / n);
}

inline double correlation_kl(const CorrelationVolume& teacher, const CorrelationVolume& student) {
    ad::NoGradGuard ng;
    return correlation_kl_loss(teacher.data, ad::Var(student.data)).val().item();
}

}  // namespace refsr
