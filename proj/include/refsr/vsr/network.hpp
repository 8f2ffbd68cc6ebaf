#pragma once

#include <string>
#include <vector>

#include "refsr/agg/deform.hpp"
#include "refsr/core/config.hpp"
#include "refsr/data/resize.hpp"
#include "refsr/match/correspondence.hpp"
#include "refsr/vsr/flow.hpp"

namespace refsr {

struct VideoClip {
    std::vector<Image> frames;

    void validate() const {
        if (frames.size() < 2) throw contract_error("VideoClip: needs >= 2 frames");
        for (const auto& f : frames)
            if (!f.same_shape(frames[0])) throw contract_error("VideoClip: non-uniform frame shapes");
    }
};

struct VsrConfig {
    int ch = 32;
    int feat_blocks = 2;
    int prop_blocks = 2;
    int fusion_blocks = 2;
    int offset_mid = 32;
    double offset_clamp = 8.0;
    int agg_k_side = 3;
    bool use_reference = true;
    bool use_attention = true;
    bool dyn_agg = true;
    bool flow_align_ref = false;  // ablation: align the reference by optical flow
    int scale_factor = 4;
    int match_stride = 4;
    FlowNetConfig flow;

    std::string id() const {
        return "refvsr-v1/c" + std::to_string(ch) + "/fb" + std::to_string(feat_blocks) + "/pb" +
               std::to_string(prop_blocks) + "/k" + std::to_string(agg_k_side);
    }

    static VsrConfig from_kv(const KeyValueConfig& kv) {
        VsrConfig c;
        c.ch = kv.get_int("vsr.channels", c.ch);
        c.feat_blocks = kv.get_int("vsr.feat_blocks", c.feat_blocks);
        c.prop_blocks = kv.get_int("vsr.prop_blocks", c.prop_blocks);
        c.fusion_blocks = kv.get_int("vsr.fusion_blocks", c.fusion_blocks);
        c.offset_mid = kv.get_int("vsr.offset_mid", c.offset_mid);
        c.offset_clamp = kv.get_double("vsr.offset_clamp", c.offset_clamp);
        c.agg_k_side = kv.get_int("vsr.agg_kernel_side", c.agg_k_side);
        c.use_reference = kv.get_bool("vsr.use_reference", c.use_reference);
        c.use_attention = kv.get_bool("vsr.use_attention", c.use_attention);
        c.dyn_agg = kv.get_bool("vsr.dyn_agg", c.dyn_agg);
        c.flow_align_ref = kv.get_bool("vsr.flow_align_ref", c.flow_align_ref);
        c.flow.levels = kv.get_int("vsr.flow_levels", c.flow.levels);
        c.flow.ch = kv.get_int("vsr.flow_channels", c.flow.ch);
        return c;
    }
};

// Two depth-to-space stages: C@H -> C@4H.
struct UpsampleHead {
    nn::Conv2dLayer u1, u2;

    UpsampleHead() = default;
    UpsampleHead(int ch, Rng& rng)
        : u1(ch, 4 * ch, 3, 1, 1, rng), u2(ch, 4 * ch, 3, 1, 1, rng) {}

    ad::Var operator()(const ad::Var& x) const {
        ad::Var t = nn::pixel_shuffle(u1(x), 2);
        return nn::pixel_shuffle(u2(t), 2);
    }

    void collect(const std::string& prefix, nn::ParamList& out) {
        u1.collect(prefix + ".u1", out);
        u2.collect(prefix + ".u2", out);
    }
};

// mask = sigmoid(convs(F_up || h)); fused = mask (.) h
struct AttentionHead {
    nn::Conv2dLayer a1, a2;

    AttentionHead() = default;
    AttentionHead(int ch, Rng& rng) : a1(2 * ch, ch, 3, 1, 1, rng), a2(ch, ch, 3, 1, 1, rng) {}

    ad::Var mask(const ad::Var& feat_up, const ad::Var& branch) const {
        if (!feat_up.val().same_shape(branch.val()))
            throw contract_error("attention_fuse: shape mismatch");
        return ad::sigmoid(a2(ad::relu(a1(ad::concat_ch({feat_up, branch})))));
    }

    ad::Var fuse(const ad::Var& feat_up, const ad::Var& branch) const {
        return ad::mul(mask(feat_up, branch), branch);
    }

    void collect(const std::string& prefix, nn::ParamList& out) {
        a1.collect(prefix + ".a1", out);
        a2.collect(prefix + ".a2", out);
    }
};

// Bidirectional recurrent x4 video restorer with a single-scale reference
// branch and attention-weighted fusion.
struct RefVideoSR {
    VsrConfig cfg;
    nn::Conv2dLayer conv_in;
    std::vector<nn::ResBlock> feat_blocks;
    nn::Conv2dLayer fwd_reduce, bwd_reduce;
    std::vector<nn::ResBlock> fwd_blocks, bwd_blocks;
    UpsampleHead up_feat, up_fwd, up_bwd;
    nn::Conv2dLayer ref_a, ref_b;
    OffsetHead ref_head;
    AggregationKernel ref_kern;
    AttentionHead att_f, att_b, att_r;
    nn::Conv2dLayer fuse_reduce;
    std::vector<nn::ResBlock> fuse_blocks;
    nn::Conv2dLayer fuse_out;
    FlowEstimator flow;

    RefVideoSR() = default;

    RefVideoSR(const VsrConfig& cfg_, Rng& rng) : cfg(cfg_) {
        const int c = cfg.ch;
        conv_in = nn::Conv2dLayer(3, c, 3, 1, 1, rng);
        for (int i = 0; i < cfg.feat_blocks; ++i) feat_blocks.emplace_back(c, rng);
        fwd_reduce = nn::Conv2dLayer(2 * c, c, 3, 1, 1, rng);
        bwd_reduce = nn::Conv2dLayer(2 * c, c, 3, 1, 1, rng);
        for (int i = 0; i < cfg.prop_blocks; ++i) {
            fwd_blocks.emplace_back(c, rng);
            bwd_blocks.emplace_back(c, rng);
        }
        up_feat = UpsampleHead(c, rng);
        up_fwd = UpsampleHead(c, rng);
        up_bwd = UpsampleHead(c, rng);
        ref_a = nn::Conv2dLayer(3, c, 3, 1, 1, rng);
        ref_b = nn::Conv2dLayer(c, c, 3, 1, 1, rng);
        ref_head = OffsetHead(c, cfg.offset_mid, cfg.agg_k_side * cfg.agg_k_side, rng,
                              cfg.offset_clamp);
        ref_kern = AggregationKernel(c, c, cfg.agg_k_side, rng);
        att_f = AttentionHead(c, rng);
        att_b = AttentionHead(c, rng);
        att_r = AttentionHead(c, rng);
        fuse_reduce = nn::Conv2dLayer(4 * c, c, 3, 1, 1, rng);
        for (int i = 0; i < cfg.fusion_blocks; ++i) fuse_blocks.emplace_back(c, rng);
        fuse_out = nn::Conv2dLayer(c, 3, 3, 1, 1, rng);
        fuse_out.zero_init();  // initial output = the bilinear global skip
        flow = FlowEstimator(cfg.flow, rng);
    }

    nn::ParamList params(bool include_flow = true) {
        nn::ParamList out;
        conv_in.collect("conv_in", out);
        for (size_t i = 0; i < feat_blocks.size(); ++i)
            feat_blocks[i].collect("feat." + std::to_string(i), out);
        fwd_reduce.collect("fwd.reduce", out);
        bwd_reduce.collect("bwd.reduce", out);
        for (size_t i = 0; i < fwd_blocks.size(); ++i)
            fwd_blocks[i].collect("fwd." + std::to_string(i), out);
        for (size_t i = 0; i < bwd_blocks.size(); ++i)
            bwd_blocks[i].collect("bwd." + std::to_string(i), out);
        up_feat.collect("up_feat", out);
        up_fwd.collect("up_fwd", out);
        up_bwd.collect("up_bwd", out);
        ref_a.collect("ref.a", out);
        ref_b.collect("ref.b", out);
        ref_head.collect("ref.head", out);
        ref_kern.collect("ref.kern", out);
        att_f.collect("att_f", out);
        att_b.collect("att_b", out);
        att_r.collect("att_r", out);
        fuse_reduce.collect("fuse.reduce", out);
        for (size_t i = 0; i < fuse_blocks.size(); ++i)
            fuse_blocks[i].collect("fuse." + std::to_string(i), out);
        fuse_out.collect("fuse.out", out);
        if (include_flow) {
            auto fp = flow.params("flow");
            out.insert(out.end(), fp.begin(), fp.end());
        }
        return out;
    }

    nn::ParamList flow_params() { return flow.params("flow"); }

    ad::Var extract_feat(const ad::Var& frame) const {
        ad::Var f = ad::relu(conv_in(frame));
        for (const auto& b : feat_blocks) f = b(f);
        return f;
    }

    // h_i = Res(F_i || W(h_{i-1}, s_i)), zeros initial state.
    ad::Var propagate_step(bool forward, const ad::Var& feat, const ad::Var& prev_hidden,
                           const ad::Var& flow_field) const {
        ad::Var warped = flow_field.defined() ? nn::warp_bilinear(prev_hidden, flow_field)
                                              : prev_hidden;
        const auto& reduce = forward ? fwd_reduce : bwd_reduce;
        const auto& blocks = forward ? fwd_blocks : bwd_blocks;
        ad::Var h = ad::relu(reduce(ad::concat_ch({feat, warped})));
        for (const auto& b : blocks) h = b(h);
        return h;
    }

    // Aggregated reference feature on the 4x lattice for one frame. The
    // correspondence field may be precomputed (the matcher is frozen during
    // stage-2 training, so fields are constant per frame).
    ad::Var reference_branch_var(const ad::Var& feat_up, const Image& frame, const Image& ref,
                                 const ad::Var& ref_feat, const Matcher& matcher,
                                 const CorrespondenceField* cached_field = nullptr) const {
        const int oh = feat_up.val().dim(1), ow = feat_up.val().dim(2);
        Tensor p0;
        if (cfg.flow_align_ref) {
            const Image up = bicubic_upsample(frame, cfg.scale_factor);
            p0 = estimate_flow(up, ref, flow);
        } else {
            const CorrespondenceField field =
                cached_field ? *cached_field : matcher.correspond(frame, ref);
            const Tensor disp = displacement_field(field, cfg.scale_factor);
            p0 = expand_displacement(disp, cfg.match_stride * cfg.scale_factor,
                                     static_cast<double>(cfg.scale_factor), oh, ow);
        }
        ad::Var offsets, modulations;
        if (cfg.dyn_agg) {
            ad::Var gathered = nn::warp_bilinear(ref_feat, ad::Var(p0));
            OffsetField off = ref_head(feat_up, gathered);
            offsets = off.offsets;
            modulations = off.modulations;
        } else {
            const int k = ref_kern.k();
            offsets = ad::Var(Tensor({2 * k, oh, ow}));
            modulations = ad::Var(Tensor::full({k, oh, ow}, 1.0));
        }
        return deform_aggregate(ref_feat, p0, offsets, modulations, ref_kern.w, ref_kern.taps);
    }

    // Precomputable per-clip constants (legal while the matcher is frozen and
    // the flow refiner is in its frozen warm-up phase).
    struct ClipCache {
        std::vector<CorrespondenceField> fields;  // per frame
        std::vector<Tensor> flow_fwd;             // index i: flow frame i -> i-1 (i >= 1)
        std::vector<Tensor> flow_bwd;             // index i: flow frame i -> i+1 (i < n-1)
        bool use_flows = false;
    };

    ClipCache precompute_clip(const std::vector<Image>& frames, const Image& ref,
                              const Matcher& matcher, bool cache_flows) const {
        ClipCache cache;
        const int n = static_cast<int>(frames.size());
        if (cfg.use_reference && !cfg.flow_align_ref)
            for (const auto& f : frames) cache.fields.push_back(matcher.correspond(f, ref));
        if (cache_flows) {
            cache.use_flows = true;
            cache.flow_fwd.resize(static_cast<size_t>(n));
            cache.flow_bwd.resize(static_cast<size_t>(n));
            for (int i = 1; i < n; ++i)
                cache.flow_fwd[static_cast<size_t>(i)] =
                    estimate_flow(frames[static_cast<size_t>(i)], frames[static_cast<size_t>(i - 1)], flow);
            for (int i = 0; i + 1 < n; ++i)
                cache.flow_bwd[static_cast<size_t>(i)] =
                    estimate_flow(frames[static_cast<size_t>(i)], frames[static_cast<size_t>(i + 1)], flow);
        }
        return cache;
    }

    // Training-path forward over a whole clip; returns unclamped SR frames.
    std::vector<ad::Var> forward_clip(const std::vector<Image>& frames, const Image& ref,
                                      const Matcher& matcher,
                                      const ClipCache* cache = nullptr) const {
        if (frames.empty()) throw contract_error("forward_clip: empty clip");
        const int n = static_cast<int>(frames.size());
        const int lh = frames[0].dim(1), lw = frames[0].dim(2);
        const int c = cfg.ch;

        std::vector<ad::Var> feats;
        for (const auto& f : frames) feats.push_back(extract_feat(ad::Var(f)));

        ad::Var ref_feat;
        if (cfg.use_reference) ref_feat = ad::relu(ref_b(ad::relu(ref_a(ad::Var(ref)))));

        const auto flow_between = [&](int i, int j, bool forward) {
            if (cache && cache->use_flows)
                return ad::Var((forward ? cache->flow_fwd : cache->flow_bwd)[static_cast<size_t>(i)]);
            return flow.estimate_var(ad::Var(frames[static_cast<size_t>(i)]),
                                     ad::Var(frames[static_cast<size_t>(j)]));
        };

        std::vector<ad::Var> hf(static_cast<size_t>(n)), hb(static_cast<size_t>(n));
        ad::Var zero_hidden(Tensor({c, lh, lw}));
        for (int i = 0; i < n; ++i) {
            if (i == 0) {
                hf[0] = propagate_step(true, feats[0], zero_hidden, ad::Var());
            } else {
                ad::Var fl = flow_between(i, i - 1, true);
                hf[static_cast<size_t>(i)] =
                    propagate_step(true, feats[static_cast<size_t>(i)], hf[static_cast<size_t>(i - 1)], fl);
            }
        }
        for (int i = n - 1; i >= 0; --i) {
            if (i == n - 1) {
                hb[static_cast<size_t>(i)] = propagate_step(false, feats[static_cast<size_t>(i)],
                                                            zero_hidden, ad::Var());
            } else {
                ad::Var fl = flow_between(i, i + 1, false);
                hb[static_cast<size_t>(i)] =
                    propagate_step(false, feats[static_cast<size_t>(i)], hb[static_cast<size_t>(i + 1)], fl);
            }
        }

        std::vector<ad::Var> outputs;
        for (int i = 0; i < n; ++i) {
            ad::Var feat_up = up_feat(feats[static_cast<size_t>(i)]);
            ad::Var f_up = up_fwd(hf[static_cast<size_t>(i)]);
            ad::Var b_up = up_bwd(hb[static_cast<size_t>(i)]);
            ad::Var r_up;
            if (cfg.use_reference)
                r_up = reference_branch_var(
                    feat_up, frames[static_cast<size_t>(i)], ref, ref_feat, matcher,
                    (cache && !cache->fields.empty()) ? &cache->fields[static_cast<size_t>(i)]
                                                      : nullptr);
            else
                r_up = ad::Var(Tensor({c, 4 * lh, 4 * lw}));

            ad::Var mf = cfg.use_attention ? att_f.fuse(feat_up, f_up) : f_up;
            ad::Var mb = cfg.use_attention ? att_b.fuse(feat_up, b_up) : b_up;
            ad::Var mr = cfg.use_attention ? att_r.fuse(feat_up, r_up) : r_up;

            ad::Var t = ad::relu(fuse_reduce(ad::concat_ch({feat_up, mf, mb, mr})));
            for (const auto& blk : fuse_blocks) t = blk(t);
            ad::Var sr = ad::add(fuse_out(t),
                                 nn::resize_bilinear(ad::Var(frames[static_cast<size_t>(i)]),
                                                     4 * lh, 4 * lw));
            outputs.push_back(sr);
        }
        return outputs;
    }

    // Inference: 4x frames, clamped, deterministic.
    VideoClip restore_clip(const VideoClip& clip, const Image& ref, const Matcher& matcher) const {
        clip.validate();
        ad::NoGradGuard ng;
        VideoClip out;
        for (auto& v : forward_clip(clip.frames, ref, matcher)) out.frames.push_back(clamp01(v.val()));
        return out;
    }
};

}  // namespace refsr
