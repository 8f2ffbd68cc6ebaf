#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "refsr/core/adam.hpp"
#include "refsr/core/checkpoint.hpp"
#include "refsr/core/config.hpp"
#include "refsr/data/synth.hpp"
#include "refsr/eval/metrics.hpp"
#include "refsr/match/losses.hpp"

namespace refsr {

// Two same-architecture encoders with independent weights: one for the input
// side, one for the reference side.
struct MatcherNets {
    EncoderConfig cfg;
    DescriptorEncoder input_enc;
    DescriptorEncoder ref_enc;

    MatcherNets() = default;
    MatcherNets(const EncoderConfig& cfg_, Rng& rng)
        : cfg(cfg_), input_enc(cfg_, rng), ref_enc(cfg_, rng) {}

    nn::ParamList params() {
        nn::ParamList out = input_enc.params("input_branch");
        auto r = ref_enc.params("ref_branch");
        out.insert(out.end(), r.begin(), r.end());
        return out;
    }

    ContrastiveMatcher matcher(int patch_radius = 1) const {
        ContrastiveMatcher m;
        m.input_enc = input_enc;
        m.ref_enc = ref_enc;
        m.patch_radius = patch_radius;
        return m;
    }
};

struct MatcherTrainConfig {
    ContrastiveLossConfig loss;
    EncoderConfig encoder;
    int steps = 500;
    std::uint64_t seed = 0;

    static MatcherTrainConfig from_kv(const KeyValueConfig& kv) {
        MatcherTrainConfig c;
        c.loss.margin = kv.get_double("loss.margin", c.loss.margin);
        c.loss.threshold = kv.get_double("loss.threshold", c.loss.threshold);
        c.loss.temperature = kv.get_double("loss.temperature", c.loss.temperature);
        c.loss.kl_weight = kv.get_double("loss.kl_weight", c.loss.kl_weight);
        c.loss.batch_size = kv.get_int("loss.batch_size", c.loss.batch_size);
        c.loss.learning_rate = kv.get_double("loss.learning_rate", c.loss.learning_rate);
        c.encoder.channels = kv.get_int_list("encoder.channels", c.encoder.channels);
        c.encoder.descriptor_dim = kv.get_int("encoder.descriptor_dim", c.encoder.descriptor_dim);
        c.steps = kv.get_int("train.steps", c.steps);
        c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
        return c;
    }
};

struct MatcherTrainResult {
    std::vector<double> loss_history;  // one entry per step (batch mean)
};

namespace detail {

inline std::vector<int> teacher_aligned_rows(int lr_h, int lr_w, int hr_grid_h, int hr_grid_w,
                                             int scale_factor) {
    if (lr_h * scale_factor != hr_grid_h || lr_w * scale_factor != hr_grid_w)
        throw contract_error("teacher/student lattice mismatch: teacher grid " +
                             std::to_string(hr_grid_w) + "x" + std::to_string(hr_grid_h) +
                             " vs student grid " + std::to_string(lr_w) + "x" +
                             std::to_string(lr_h) + " at scale " + std::to_string(scale_factor));
    std::vector<int> rows;
    rows.reserve(static_cast<size_t>(lr_h) * lr_w);
    for (int i = 0; i < lr_h; ++i)
        for (int j = 0; j < lr_w; ++j) rows.push_back(i * scale_factor * hr_grid_w + j * scale_factor);
    return rows;
}

inline Tensor gather_tensor_rows(const Tensor& rows, const std::vector<int>& idx) {
    const int d = rows.dim(1);
    Tensor out({static_cast<int>(idx.size()), d});
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(rows.data() + static_cast<size_t>(idx[r]) * d,
                  rows.data() + static_cast<size_t>(idx[r] + 1) * d, out.data() + r * d);
    return out;
}

struct GridVar {
    ad::Var rows;  // [h*w, d]
    int h = 0, w = 0;
};

inline GridVar encode_rows(const DescriptorEncoder& enc, const Image& img) {
    ad::Var feat = enc.forward(ad::Var(img));
    GridVar g;
    g.h = feat.val().dim(1);
    g.w = feat.val().dim(2);
    g.rows = ad::chw_to_rows(feat);
    return g;
}

}  // namespace detail

// HR-HR teacher: margin loss only (alpha_kl = 0 by definition).
inline MatcherTrainResult train_teacher(MatcherNets& teacher, const std::vector<TrainPair>& pairs,
                                        const MatcherTrainConfig& cfg,
                                        const std::function<void(int, double)>& progress = {}) {
    if (pairs.empty()) throw config_error("train_teacher: empty dataset");
    cfg.loss.validate();
    Rng rng(cfg.seed ^ 0x746561ULL);
    Adam opt;
    opt.add_group(teacher.params(), cfg.loss.learning_rate);

    MatcherTrainResult result;
    for (int step = 0; step < cfg.steps; ++step) {
        ad::Var batch_loss;
        for (int b = 0; b < cfg.loss.batch_size; ++b) {
            const TrainPair& pair = pairs[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pairs.size()) - 1))];
            auto in = detail::encode_rows(teacher.input_enc, pair.hr_input);
            auto ref = detail::encode_rows(teacher.ref_enc, pair.hr_ref);

            // HR-HR ground truth: same lattice on both sides.
            GtField gt;
            gt.h = in.h;
            gt.w = in.w;
            gt.target.resize(static_cast<size_t>(in.h) * in.w);
            gt.valid.resize(static_cast<size_t>(in.h) * in.w, 0);
            for (int i = 0; i < in.h; ++i)
                for (int j = 0; j < in.w; ++j) {
                    const Vec2 q = gt_correspondence(j, i, pair.homography, EncoderConfig::stride, 1);
                    gt.target[static_cast<size_t>(gt.index(i, j))] = q;
                    gt.valid[static_cast<size_t>(gt.index(i, j))] = inside_grid(q, ref.h, ref.w) ? 1 : 0;
                }
            auto gt_idx = gt_ref_indices(gt, ref.h, ref.w);
            auto res = triplet_margin_loss(in.rows, in.h, in.w, ref.rows, ref.h, ref.w, gt_idx,
                                           cfg.loss);
            batch_loss = batch_loss.defined() ? ad::add(batch_loss, res.loss) : res.loss;
        }
        batch_loss = ad::scale(batch_loss, 1.0 / cfg.loss.batch_size);
        const double lv = batch_loss.val().item();
        if (!std::isfinite(lv))
            throw error("train_teacher: non-finite loss at step " + std::to_string(step));
        result.loss_history.push_back(lv);
        auto grads = ad::backward_collect(batch_loss);
        opt.step(grads);
        if (progress) progress(step, lv);
    }
    return result;
}

// LR-HR student with the teacher frozen: L = L_margin + alpha_kl * L_kl.
// Teacher volumes live on the student lattice (the teacher's HR-side grid is
// subsampled to align one-to-one with the student's LR grid).
inline MatcherTrainResult train_student(MatcherNets& student, const MatcherNets& teacher,
                                        const std::vector<TrainPair>& pairs,
                                        const MatcherTrainConfig& cfg,
                                        const std::function<void(int, double)>& progress = {}) {
    if (pairs.empty()) throw config_error("train_student: empty dataset");
    cfg.loss.validate();
    Rng rng(cfg.seed ^ 0x737475ULL);
    Adam opt;
    opt.add_group(student.params(), cfg.loss.learning_rate);

    MatcherTrainResult result;
    for (int step = 0; step < cfg.steps; ++step) {
        ad::Var batch_loss;
        for (int b = 0; b < cfg.loss.batch_size; ++b) {
            const TrainPair& pair = pairs[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pairs.size()) - 1))];
            auto lr = detail::encode_rows(student.input_enc, pair.lr_input);
            auto ref = detail::encode_rows(student.ref_enc, pair.hr_ref);

            const GtField gt = pair_gt_field(pair, EncoderConfig::stride);
            auto gt_idx = gt_ref_indices(gt, ref.h, ref.w);
            auto res = triplet_margin_loss(lr.rows, lr.h, lr.w, ref.rows, ref.h, ref.w, gt_idx,
                                           cfg.loss);
            ad::Var loss = res.loss;

            if (cfg.loss.kl_weight > 0.0) {
                Tensor teacher_vol;
                {
                    ad::NoGradGuard ng;
                    auto t_in = detail::encode_rows(teacher.input_enc, pair.hr_input);
                    auto t_ref = detail::encode_rows(teacher.ref_enc, pair.hr_ref);
                    const auto rows = detail::teacher_aligned_rows(lr.h, lr.w, t_in.h, t_in.w,
                                                                  pair.scale_factor);
                    const Tensor aligned = detail::gather_tensor_rows(t_in.rows.val(), rows);
                    teacher_vol = correlation_volume_var(ad::Var(aligned), t_ref.rows,
                                                         cfg.loss.temperature)
                                      .val();
                }
                ad::Var student_vol =
                    correlation_volume_var(lr.rows, ref.rows, cfg.loss.temperature);
                loss = ad::add(loss, ad::scale(correlation_kl_loss(teacher_vol, student_vol),
                                               cfg.loss.kl_weight));
            }
            batch_loss = batch_loss.defined() ? ad::add(batch_loss, loss) : loss;
        }
        batch_loss = ad::scale(batch_loss, 1.0 / cfg.loss.batch_size);
        const double lv = batch_loss.val().item();
        if (!std::isfinite(lv))
            throw error("train_student: non-finite loss at step " + std::to_string(step));
        result.loss_history.push_back(lv);
        auto grads = ad::backward_collect(batch_loss);
        opt.step(grads);
        if (progress) progress(step, lv);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint glue

inline Checkpoint matcher_checkpoint(MatcherNets& nets, const std::string& kind,
                                     const Adam* opt = nullptr) {
    Checkpoint ck;
    ck.kind = kind;
    ck.architecture_id = nets.cfg.architecture_id();
    ck.meta["stride"] = EncoderConfig::stride;
    ck.meta["descriptor_dim"] = nets.cfg.descriptor_dim;
    ck.meta["channels"] = nets.cfg.channels;
    for (auto& p : nets.params()) ck.tensors.emplace_back(p.name, p.var.val());
    if (opt) {
        ck.meta["adam_step"] = opt->step_count();
        auto st = opt->state_tensors();
        for (size_t i = 0; i < st.size(); ++i)
            ck.tensors.emplace_back("opt." + std::to_string(i), st[i]);
    }
    return ck;
}

inline MatcherNets matcher_from_checkpoint(const Checkpoint& ck, const std::string& expect_kind) {
    if (!expect_kind.empty() && ck.kind != expect_kind)
        throw config_error("checkpoint kind '" + ck.kind + "', expected '" + expect_kind + "'");
    EncoderConfig cfg;
    cfg.channels = ck.meta.at("channels").get<std::vector<int>>();
    cfg.descriptor_dim = ck.meta.at("descriptor_dim").get<int>();
    if (ck.architecture_id != cfg.architecture_id())
        throw config_error("architecture_id mismatch: " + ck.architecture_id + " vs " +
                           cfg.architecture_id());
    Rng rng(0);
    MatcherNets nets(cfg, rng);
    for (auto& p : nets.params()) {
        const Tensor& t = ck.get(p.name);
        if (!t.same_shape(p.var.val()))
            throw config_error("checkpoint tensor shape mismatch for " + p.name);
        p.var.mutable_val() = t;
    }
    return nets;
}

// Mean held-out AEE of a matcher over synthesized pairs.
inline double matcher_aee(const Matcher& matcher, const std::vector<TrainPair>& pairs,
                          int stride = EncoderConfig::stride) {
    double total = 0.0;
    for (const auto& pair : pairs) {
        const CorrespondenceField field = matcher.correspond(pair.lr_input, pair.hr_ref);
        total += aee(field, pair_gt_field(pair, stride));
    }
    return total / static_cast<double>(pairs.size());
}

// Mean held-out KL from the teacher's correlation volumes to the student's.
inline double matcher_heldout_kl(const MatcherNets& student, const MatcherNets& teacher,
                                 const std::vector<TrainPair>& pairs, double temperature) {
    ad::NoGradGuard ng;
    double total = 0.0;
    for (const auto& pair : pairs) {
        auto lr = detail::encode_rows(student.input_enc, pair.lr_input);
        auto ref = detail::encode_rows(student.ref_enc, pair.hr_ref);
        auto t_in = detail::encode_rows(teacher.input_enc, pair.hr_input);
        auto t_ref = detail::encode_rows(teacher.ref_enc, pair.hr_ref);
        const auto rows = detail::teacher_aligned_rows(lr.h, lr.w, t_in.h, t_in.w, pair.scale_factor);
        const Tensor aligned = detail::gather_tensor_rows(t_in.rows.val(), rows);
        const Tensor tvol = correlation_volume_var(ad::Var(aligned), t_ref.rows, temperature).val();
        ad::Var svol = correlation_volume_var(lr.rows, ref.rows, temperature);
        total += correlation_kl_loss(tvol, svol).val().item();
    }
    return total / static_cast<double>(pairs.size());
}

}  // namespace refsr
