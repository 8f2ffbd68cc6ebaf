#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "refsr/core/tensor.hpp"

namespace refsr::ad {

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
};

class Var;

struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Maps the gradient at this node to gradients at each parent (aligned with
    // `parents`; an undefined Var means "no gradient for that parent").
    std::function<std::vector<Var>(const Var&)> backward;
    const char* op = "leaf";
};

// Value-semantic handle to a graph node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor v, bool requires_grad = false) : n_(std::make_shared<Node>()) {
        n_->value = std::move(v);
        n_->requires_grad = requires_grad;
    }
    explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    bool defined() const { return n_ != nullptr; }
    const Tensor& val() const { return n_->value; }
    Tensor& mutable_val() { return n_->value; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    const std::shared_ptr<Node>& node() const { return n_; }

    Var detach() const { return Var(n_->value, false); }

private:
    std::shared_ptr<Node> n_;
};

namespace detail {

inline Var make_op(Tensor value, std::vector<Var> inputs,
                   std::function<std::vector<Var>(const Var&)> backward, const char* op) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = op;
    bool need = false;
    if (grad_mode())
        for (const auto& in : inputs)
            if (in.requires_grad()) need = true;
    if (need) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs) node->parents.push_back(in.node());
        node->backward = std::move(backward);
    }
    return Var(node);
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.val().same_shape(b.val()))
        throw contract_error(std::string(op) + ": shape mismatch " +
                             Tensor::shape_str(a.val().shape()) + " vs " +
                             Tensor::shape_str(b.val().shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

inline Var add(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "add");
    Tensor out = a.val();
    const double* pb = b.val().data();
    double* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) po[i] += pb[i];
    return detail::make_op(std::move(out), {a, b},
                           [](const Var& g) { return std::vector<Var>{g, g}; }, "add");
}

inline Var scale(const Var& a, double s);
inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var sub(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "sub");
    Tensor out = a.val();
    const double* pb = b.val().data();
    double* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
    return detail::make_op(std::move(out), {a, b},
                           [](const Var& g) { return std::vector<Var>{g, neg(g)}; }, "sub");
}

inline Var mul(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "mul");
    Tensor out = a.val();
    const double* pb = b.val().data();
    double* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
    Var av = a, bv = b;
    return detail::make_op(std::move(out), {a, b},
                           [av, bv](const Var& g) { return std::vector<Var>{mul(g, bv), mul(g, av)}; },
                           "mul");
}

inline Var scale(const Var& a, double s) {
    Tensor out = a.val();
    double* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) po[i] *= s;
    return detail::make_op(std::move(out), {a},
                           [s](const Var& g) { return std::vector<Var>{scale(g, s)}; }, "scale");
}

inline Var add_scalar(const Var& a, double s) {
    Tensor out = a.val();
    double* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) po[i] += s;
    return detail::make_op(std::move(out), {a},
                           [](const Var& g) { return std::vector<Var>{g}; }, "add_scalar");
}

// Elementwise product with a constant tensor; the workhorse behind masked
// activation backward passes. Linear in x, so it differentiates cleanly again.
inline Var mul_const(const Var& x, Tensor mask) {
    if (!x.val().same_shape(mask)) throw contract_error("mul_const: shape mismatch");
    Tensor out = x.val();
    const double* pm = mask.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) po[i] *= pm[i];
    return detail::make_op(std::move(out), {x},
                           [m = std::move(mask)](const Var& g) {
                               return std::vector<Var>{mul_const(g, m)};
                           },
                           "mul_const");
}

inline Var relu(const Var& a) {
    Tensor out = a.val();
    Tensor mask = Tensor::zeros_like(out);
    double* po = out.data();
    double* pm = mask.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        if (po[i] > 0.0)
            pm[i] = 1.0;
        else
            po[i] = 0.0;
    }
    return detail::make_op(std::move(out), {a},
                           [m = std::move(mask)](const Var& g) {
                               return std::vector<Var>{mul_const(g, m)};
                           },
                           "relu");
}

inline Var leaky_relu(const Var& a, double slope = 0.2) {
    Tensor out = a.val();
    Tensor mask = Tensor::zeros_like(out);
    double* po = out.data();
    double* pm = mask.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        if (po[i] > 0.0) {
            pm[i] = 1.0;
        } else {
            pm[i] = slope;
            po[i] *= slope;
        }
    }
    return detail::make_op(std::move(out), {a},
                           [m = std::move(mask)](const Var& g) {
                               return std::vector<Var>{mul_const(g, m)};
                           },
                           "leaky_relu");
}

inline Var sigmoid(const Var& a) {
    Tensor out = a.val();
    double* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) po[i] = 1.0 / (1.0 + std::exp(-po[i]));
    Tensor dmask = out;
    double* pd = dmask.data();
    for (std::int64_t i = 0; i < dmask.size(); ++i) pd[i] = pd[i] * (1.0 - pd[i]);
    return detail::make_op(std::move(out), {a},
                           [m = std::move(dmask)](const Var& g) {
                               return std::vector<Var>{mul_const(g, m)};
                           },
                           "sigmoid");
}

inline Var exp_v(const Var& a) {
    Tensor out = a.val();
    double* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) po[i] = std::exp(po[i]);
    Tensor m = out;
    return detail::make_op(std::move(out), {a},
                           [m = std::move(m)](const Var& g) {
                               return std::vector<Var>{mul_const(g, m)};
                           },
                           "exp");
}

inline Var log_v(const Var& a) {
    Tensor out = a.val();
    Tensor m = a.val();
    double* po = out.data();
    double* pm = m.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        po[i] = std::log(po[i]);
        pm[i] = 1.0 / pm[i];
    }
    return detail::make_op(std::move(out), {a},
                           [m = std::move(m)](const Var& g) {
                               return std::vector<Var>{mul_const(g, m)};
                           },
                           "log");
}

inline Var sqrt_v(const Var& a) {
    Tensor out = a.val();
    double* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) po[i] = std::sqrt(po[i]);
    Tensor m = out;
    double* pm = m.data();
    for (std::int64_t i = 0; i < m.size(); ++i) pm[i] = 0.5 / pm[i];
    return detail::make_op(std::move(out), {a},
                           [m = std::move(m)](const Var& g) {
                               return std::vector<Var>{mul_const(g, m)};
                           },
                           "sqrt");
}

inline Var square(const Var& a) { return mul(a, a); }

inline Var abs_v(const Var& a) {
    Tensor out = a.val();
    Tensor m = a.val();
    double* po = out.data();
    double* pm = m.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        pm[i] = (po[i] > 0.0) ? 1.0 : (po[i] < 0.0 ? -1.0 : 0.0);
        po[i] = std::fabs(po[i]);
    }
    return detail::make_op(std::move(out), {a},
                           [m = std::move(m)](const Var& g) {
                               return std::vector<Var>{mul_const(g, m)};
                           },
                           "abs");
}

inline Var clamp_min(const Var& a, double lo) {
    Tensor out = a.val();
    Tensor m = Tensor::zeros_like(out);
    double* po = out.data();
    double* pm = m.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        if (po[i] >= lo)
            pm[i] = 1.0;
        else
            po[i] = lo;
    }
    return detail::make_op(std::move(out), {a},
                           [m = std::move(m)](const Var& g) {
                               return std::vector<Var>{mul_const(g, m)};
                           },
                           "clamp_min");
}

inline Var clamp(const Var& a, double lo, double hi) {
    Tensor out = a.val();
    Tensor m = Tensor::zeros_like(out);
    double* po = out.data();
    double* pm = m.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        if (po[i] < lo)
            po[i] = lo;
        else if (po[i] > hi)
            po[i] = hi;
        else
            pm[i] = 1.0;
    }
    return detail::make_op(std::move(out), {a},
                           [m = std::move(m)](const Var& g) {
                               return std::vector<Var>{mul_const(g, m)};
                           },
                           "clamp");
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts

inline Var broadcast_scalar(const Var& s, std::vector<int> shape);

inline Var sum_all(const Var& a) {
    Tensor out = Tensor::scalar(a.val().sum_all());
    auto shape = a.val().shape();
    return detail::make_op(std::move(out), {a},
                           [shape](const Var& g) {
                               return std::vector<Var>{broadcast_scalar(g, shape)};
                           },
                           "sum_all");
}

inline Var broadcast_scalar(const Var& s, std::vector<int> shape) {
    if (s.val().size() != 1) throw contract_error("broadcast_scalar: input not scalar");
    Tensor out = Tensor::full(shape, s.val()[0]);
    return detail::make_op(std::move(out), {s},
                           [](const Var& g) { return std::vector<Var>{sum_all(g)}; },
                           "broadcast_scalar");
}

inline Var mean_all(const Var& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.val().size()));
}

// ---------------------------------------------------------------------------
// 2-d matrix ops

inline Var transpose2d(const Var& a) {
    const Tensor& A = a.val();
    if (A.rank() != 2) throw contract_error("transpose2d: rank != 2");
    const int n = A.dim(0), m = A.dim(1);
    Tensor out({m, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(j, i) = A.at(i, j);
    return detail::make_op(std::move(out), {a},
                           [](const Var& g) { return std::vector<Var>{transpose2d(g)}; },
                           "transpose2d");
}

inline Var matmul(const Var& a, const Var& b) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
        throw contract_error("matmul: incompatible shapes");
    const int n = A.dim(0), k = A.dim(1), m = B.dim(1);
    Tensor out({n, m});
    const double* pa = A.data();
    const double* pb = B.data();
    double* po = out.data();
    for (int i = 0; i < n; ++i) {
        double* orow = po + static_cast<size_t>(i) * m;
        for (int t = 0; t < k; ++t) {
            const double av = pa[static_cast<size_t>(i) * k + t];
            if (av == 0.0) continue;
            const double* brow = pb + static_cast<size_t>(t) * m;
            for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    Var av = a, bv = b;
    return detail::make_op(std::move(out), {a, b},
                           [av, bv](const Var& g) {
                               return std::vector<Var>{matmul(g, transpose2d(bv)),
                                                       matmul(transpose2d(av), g)};
                           },
                           "matmul");
}

inline Var scatter_add_rows(const Var& g, const std::vector<int>& idx, int n_rows);

inline Var gather_rows(const Var& a, std::vector<int> idx) {
    const Tensor& A = a.val();
    if (A.rank() != 2) throw contract_error("gather_rows: rank != 2");
    const int d = A.dim(1);
    Tensor out({static_cast<int>(idx.size()), d});
    for (size_t r = 0; r < idx.size(); ++r) {
        const double* src = A.data() + static_cast<size_t>(idx[r]) * d;
        double* dst = out.data() + r * d;
        std::copy(src, src + d, dst);
    }
    const int n = A.dim(0);
    return detail::make_op(std::move(out), {a},
                           [idx = std::move(idx), n](const Var& g) {
                               return std::vector<Var>{scatter_add_rows(g, idx, n)};
                           },
                           "gather_rows");
}

inline Var scatter_add_rows(const Var& g, const std::vector<int>& idx, int n_rows) {
    const Tensor& G = g.val();
    const int d = G.dim(1);
    Tensor out({n_rows, d});
    for (size_t r = 0; r < idx.size(); ++r) {
        const double* src = G.data() + r * d;
        double* dst = out.data() + static_cast<size_t>(idx[r]) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
    auto idx_copy = idx;
    return detail::make_op(std::move(out), {g},
                           [idx = std::move(idx_copy)](const Var& gg) {
                               return std::vector<Var>{gather_rows(gg, idx)};
                           },
                           "scatter_add_rows");
}

inline Var broadcast_cols(const Var& v, int m);

// [N,M] -> [N]
inline Var rowsum(const Var& a) {
    const Tensor& A = a.val();
    if (A.rank() != 2) throw contract_error("rowsum: rank != 2");
    const int n = A.dim(0), m = A.dim(1);
    Tensor out({n});
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        const double* row = A.data() + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) s += row[j];
        out[i] = s;
    }
    return detail::make_op(std::move(out), {a},
                           [m](const Var& g) { return std::vector<Var>{broadcast_cols(g, m)}; },
                           "rowsum");
}

// [N] -> [N,M]
inline Var broadcast_cols(const Var& v, int m) {
    const Tensor& V = v.val();
    if (V.rank() != 1) throw contract_error("broadcast_cols: rank != 1");
    const int n = V.dim(0);
    Tensor out({n, m});
    for (int i = 0; i < n; ++i) {
        double* row = out.data() + static_cast<size_t>(i) * m;
        std::fill(row, row + m, V[i]);
    }
    return detail::make_op(std::move(out), {v},
                           [](const Var& g) { return std::vector<Var>{rowsum(g)}; },
                           "broadcast_cols");
}

// Row-wise softmax of S/temperature, numerically stabilized.
inline Var softmax_rows(const Var& s, double temperature) {
    if (temperature <= 0.0) throw domain_error("softmax temperature must be > 0");
    const Tensor& S = s.val();
    if (S.rank() != 2) throw contract_error("softmax_rows: rank != 2");
    const int n = S.dim(0), m = S.dim(1);
    Tensor out({n, m});
    for (int i = 0; i < n; ++i) {
        const double* row = S.data() + static_cast<size_t>(i) * m;
        double* orow = out.data() + static_cast<size_t>(i) * m;
        double mx = row[0];
        for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < m; ++j) {
            orow[j] = std::exp((row[j] - mx) / temperature);
            z += orow[j];
        }
        const double inv = 1.0 / z;
        for (int j = 0; j < m; ++j) orow[j] *= inv;
    }
    Tensor probs = out;
    return detail::make_op(
        std::move(out), {s},
        [probs = std::move(probs), temperature, m](const Var& g) {
            Var gp = mul_const(g, probs);
            Var dot = rowsum(gp);
            Var corr = mul_const(broadcast_cols(dot, m), probs);
            return std::vector<Var>{scale(sub(gp, corr), 1.0 / temperature)};
        },
        "softmax_rows");
}

// Row-wise L2 normalization. All-zero rows map to zero (they score 0 against
// everything and receive zero gradient).
inline Var l2_normalize_rows(const Var& a) {
    const Tensor& A = a.val();
    if (A.rank() != 2) throw contract_error("l2_normalize_rows: rank != 2");
    const int n = A.dim(0), d = A.dim(1);
    Tensor out({n, d});
    Tensor inv_norm({n, d});
    for (int i = 0; i < n; ++i) {
        const double* row = A.data() + static_cast<size_t>(i) * d;
        double* orow = out.data() + static_cast<size_t>(i) * d;
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += row[j] * row[j];
        const double norm = std::sqrt(s);
        const double inv = norm > 0.0 ? 1.0 / norm : 0.0;
        for (int j = 0; j < d; ++j) {
            orow[j] = row[j] * inv;
            inv_norm.at(i, j) = inv;
        }
    }
    Tensor unit = out;
    return detail::make_op(
        std::move(out), {a},
        [unit = std::move(unit), inv_norm = std::move(inv_norm), d](const Var& g) {
            Var gdotu = rowsum(mul_const(g, unit));
            Var proj = mul_const(broadcast_cols(gdotu, d), unit);
            return std::vector<Var>{mul_const(sub(g, proj), inv_norm)};
        },
        "l2_normalize_rows");
}

// ---------------------------------------------------------------------------
// Shape ops

inline Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a.val().reshaped(shape);
    auto orig = a.val().shape();
    return detail::make_op(std::move(out), {a},
                           [orig](const Var& g) {
                               return std::vector<Var>{reshape(g, orig)};
                           },
                           "reshape");
}

inline Var slice_ch(const Var& a, int c0, int c1);

inline Var concat_ch(const std::vector<Var>& parts) {
    if (parts.empty()) throw contract_error("concat_ch: empty");
    const int h = parts[0].val().dim(1), w = parts[0].val().dim(2);
    int ctot = 0;
    for (const auto& p : parts) {
        if (p.val().rank() != 3 || p.val().dim(1) != h || p.val().dim(2) != w)
            throw contract_error("concat_ch: spatial shape mismatch");
        ctot += p.val().dim(0);
    }
    Tensor out({ctot, h, w});
    std::vector<int> offsets;
    int off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::int64_t n = p.val().size();
        std::copy(p.val().data(), p.val().data() + n,
                  out.data() + static_cast<std::int64_t>(off) * h * w);
        off += p.val().dim(0);
    }
    std::vector<int> sizes;
    for (const auto& p : parts) sizes.push_back(p.val().dim(0));
    return detail::make_op(std::move(out), parts,
                           [offsets, sizes](const Var& g) {
                               std::vector<Var> gs;
                               for (size_t i = 0; i < sizes.size(); ++i)
                                   gs.push_back(slice_ch(g, offsets[i], offsets[i] + sizes[i]));
                               return gs;
                           },
                           "concat_ch");
}

inline Var embed_ch(const Var& a, int c0, int c_total);

inline Var slice_ch(const Var& a, int c0, int c1) {
    const Tensor& A = a.val();
    if (A.rank() != 3 || c0 < 0 || c1 > A.dim(0) || c0 >= c1)
        throw contract_error("slice_ch: bad range");
    const int h = A.dim(1), w = A.dim(2);
    Tensor out({c1 - c0, h, w});
    std::copy(A.data() + static_cast<std::int64_t>(c0) * h * w,
              A.data() + static_cast<std::int64_t>(c1) * h * w, out.data());
    const int ctot = A.dim(0);
    return detail::make_op(std::move(out), {a},
                           [c0, ctot](const Var& g) {
                               return std::vector<Var>{embed_ch(g, c0, ctot)};
                           },
                           "slice_ch");
}

inline Var embed_ch(const Var& a, int c0, int c_total) {
    const Tensor& A = a.val();
    const int c = A.dim(0), h = A.dim(1), w = A.dim(2);
    Tensor out({c_total, h, w});
    std::copy(A.data(), A.data() + A.size(), out.data() + static_cast<std::int64_t>(c0) * h * w);
    return detail::make_op(std::move(out), {a},
                           [c0, c](const Var& g) {
                               return std::vector<Var>{slice_ch(g, c0, c0 + c)};
                           },
                           "embed_ch");
}

// [C,H,W] -> [H*W, C] rows in raster order.
inline Var chw_to_rows(const Var& a);
inline Var rows_to_chw(const Var& a, int c, int h, int w);

inline Var chw_to_rows(const Var& a) {
    const Tensor& A = a.val();
    if (A.rank() != 3) throw contract_error("chw_to_rows: rank != 3");
    const int c = A.dim(0), h = A.dim(1), w = A.dim(2);
    Tensor out({h * w, c});
    for (int ch = 0; ch < c; ++ch)
        for (int p = 0; p < h * w; ++p) out.at(p, ch) = A[static_cast<std::int64_t>(ch) * h * w + p];
    return detail::make_op(std::move(out), {a},
                           [c, h, w](const Var& g) {
                               return std::vector<Var>{rows_to_chw(g, c, h, w)};
                           },
                           "chw_to_rows");
}

inline Var rows_to_chw(const Var& a, int c, int h, int w) {
    const Tensor& A = a.val();
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int p = 0; p < h * w; ++p) out[static_cast<std::int64_t>(ch) * h * w + p] = A.at(p, ch);
    return detail::make_op(std::move(out), {a},
                           [](const Var& g) { return std::vector<Var>{chw_to_rows(g)}; },
                           "rows_to_chw");
}

// ---------------------------------------------------------------------------
// Backward engine

using GradMap = std::unordered_map<const Node*, Var>;

// Reverse-mode sweep from a scalar root. Gradients are returned in a map and
// never stored on nodes, so repeated sweeps do not pollute each other. With
// create_graph=true the returned gradients are themselves differentiable
// (valid for graphs built from linear and piecewise-linear ops).
inline GradMap backward_collect(const Var& root, bool create_graph = false) {
    if (root.val().size() != 1) throw contract_error("backward_collect: root is not scalar");
    if (!root.requires_grad()) return {};

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    GradMap grads;
    std::unique_ptr<NoGradGuard> guard;
    if (!create_graph) guard = std::make_unique<NoGradGuard>();

    grads.emplace(root.node().get(), Var(Tensor::full(root.val().shape(), 1.0)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (!node->backward) continue;
        auto git = grads.find(node);
        if (git == grads.end()) continue;
        std::vector<Var> pg = node->backward(git->second);
        for (size_t i = 0; i < node->parents.size(); ++i) {
            Node* parent = node->parents[i].get();
            if (!parent->requires_grad || i >= pg.size() || !pg[i].defined()) continue;
            auto pit = grads.find(parent);
            if (pit == grads.end())
                grads.emplace(parent, pg[i]);
            else
                pit->second = add(pit->second, pg[i]);
        }
    }
    return grads;
}

// Gradient of a scalar w.r.t. one input, as a plain tensor (zeros if the input
// does not participate).
inline Tensor grad_of(const Var& root, const Var& x) {
    GradMap m = backward_collect(root);
    auto it = m.find(x.node().get());
    if (it == m.end()) return Tensor::zeros_like(x.val());
    return it->second.val();
}

}  // namespace refsr::ad
