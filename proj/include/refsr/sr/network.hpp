#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "refsr/agg/deform.hpp"
#include "refsr/core/checkpoint.hpp"
#include "refsr/core/config.hpp"
#include "refsr/core/nn.hpp"
#include "refsr/match/correspondence.hpp"

namespace refsr {

struct SrNetConfig {
    int ch = 64;
    int trunk_blocks = 16;
    std::vector<int> transfer_blocks = {16, 8, 4};
    int offset_mid = 64;
    double offset_clamp = 8.0;
    int agg_k_side = 3;
    bool dyn_agg = true;        // false: fixed taps (dp = 0, dm = 1)
    bool use_reference = true;  // false: no-reference trunk only
    int scale_factor = 4;
    int match_stride = 4;

    std::string id() const {
        return "refsr-v1/c" + std::to_string(ch) + "/t" + std::to_string(trunk_blocks) + "." +
               std::to_string(transfer_blocks[0]) + "." + std::to_string(transfer_blocks[1]) + "." +
               std::to_string(transfer_blocks[2]) + "/k" + std::to_string(agg_k_side);
    }

    static SrNetConfig from_kv(const KeyValueConfig& kv) {
        SrNetConfig c;
        c.ch = kv.get_int("sr.channels", c.ch);
        c.trunk_blocks = kv.get_int("sr.trunk_blocks", c.trunk_blocks);
        c.transfer_blocks = kv.get_int_list("sr.transfer_blocks", c.transfer_blocks);
        if (c.transfer_blocks.size() != 3) throw config_error("sr.transfer_blocks needs 3 entries");
        c.offset_mid = kv.get_int("sr.offset_mid", c.offset_mid);
        c.offset_clamp = kv.get_double("sr.offset_clamp", c.offset_clamp);
        c.agg_k_side = kv.get_int("sr.agg_kernel_side", c.agg_k_side);
        c.dyn_agg = kv.get_bool("sr.dyn_agg", c.dyn_agg);
        c.use_reference = kv.get_bool("sr.use_reference", c.use_reference);
        return c;
    }
};

// x4 reference-based restoration network: residual trunk, reference texture
// transfer at three scales through dynamic aggregation, depth-to-space
// upsampling, bilinear global skip.
struct RefImageSR {
    SrNetConfig cfg;
    nn::Conv2dLayer conv_in;
    std::vector<nn::ResBlock> trunk;

    // reference pyramid: full resolution, /2, /4 (levels 2, 1, 0)
    nn::Conv2dLayer rp_full_a, rp_full_b;
    nn::Conv2dLayer rp_half_a, rp_half_b;
    nn::Conv2dLayer rp_quarter_a, rp_quarter_b;

    struct TransferLevel {
        OffsetHead head;
        AggregationKernel kern;
        nn::Conv2dLayer reduce;
        std::vector<nn::ResBlock> blocks;
        nn::Conv2dLayer out_conv;  // zero-init: reference path starts as a no-op
    };
    std::array<TransferLevel, 3> levels;

    nn::Conv2dLayer up0, up1;      // C -> 4C ahead of each depth-to-space
    nn::Conv2dLayer tail1, tail2;  // C -> C -> 3

    RefImageSR() = default;

    RefImageSR(const SrNetConfig& cfg_, Rng& rng) : cfg(cfg_) {
        const int c = cfg.ch;
        conv_in = nn::Conv2dLayer(3, c, 3, 1, 1, rng);
        for (int i = 0; i < cfg.trunk_blocks; ++i) trunk.emplace_back(c, rng);
        rp_full_a = nn::Conv2dLayer(3, c, 3, 1, 1, rng);
        rp_full_b = nn::Conv2dLayer(c, c, 3, 1, 1, rng);
        rp_half_a = nn::Conv2dLayer(c, c, 3, 2, 1, rng);
        rp_half_b = nn::Conv2dLayer(c, c, 3, 1, 1, rng);
        rp_quarter_a = nn::Conv2dLayer(c, c, 3, 2, 1, rng);
        rp_quarter_b = nn::Conv2dLayer(c, c, 3, 1, 1, rng);
        for (int l = 0; l < 3; ++l) {
            auto& lv = levels[static_cast<size_t>(l)];
            lv.head = OffsetHead(c, cfg.offset_mid, cfg.agg_k_side * cfg.agg_k_side, rng,
                                 cfg.offset_clamp);
            lv.kern = AggregationKernel(c, c, cfg.agg_k_side, rng);
            lv.reduce = nn::Conv2dLayer(2 * c, c, 3, 1, 1, rng);
            for (int i = 0; i < cfg.transfer_blocks[static_cast<size_t>(l)]; ++i)
                lv.blocks.emplace_back(c, rng);
            lv.out_conv = nn::Conv2dLayer(c, c, 3, 1, 1, rng);
            lv.out_conv.zero_init();
        }
        up0 = nn::Conv2dLayer(c, 4 * c, 3, 1, 1, rng);
        up1 = nn::Conv2dLayer(c, 4 * c, 3, 1, 1, rng);
        tail1 = nn::Conv2dLayer(c, c, 3, 1, 1, rng);
        tail2 = nn::Conv2dLayer(c, 3, 3, 1, 1, rng);
        tail2.zero_init();  // initial output = the bilinear global skip
    }

    nn::ParamList params() {
        nn::ParamList out;
        conv_in.collect("conv_in", out);
        for (size_t i = 0; i < trunk.size(); ++i) trunk[i].collect("trunk." + std::to_string(i), out);
        rp_full_a.collect("rp.full_a", out);
        rp_full_b.collect("rp.full_b", out);
        rp_half_a.collect("rp.half_a", out);
        rp_half_b.collect("rp.half_b", out);
        rp_quarter_a.collect("rp.quarter_a", out);
        rp_quarter_b.collect("rp.quarter_b", out);
        for (int l = 0; l < 3; ++l) {
            auto& lv = levels[static_cast<size_t>(l)];
            const std::string p = "level" + std::to_string(l);
            lv.head.collect(p + ".head", out);
            lv.kern.collect(p + ".kern", out);
            lv.reduce.collect(p + ".reduce", out);
            for (size_t i = 0; i < lv.blocks.size(); ++i)
                lv.blocks[i].collect(p + ".blocks." + std::to_string(i), out);
            lv.out_conv.collect(p + ".out_conv", out);
        }
        up0.collect("up0", out);
        up1.collect("up1", out);
        tail1.collect("tail1", out);
        tail2.collect("tail2", out);
        return out;
    }

    // F_l = Res(F_{l-1} || R_{l-1}) + F_{l-1}
    ad::Var texture_transfer(int level, const ad::Var& feat, const ad::Var& aggregated) const {
        if (!feat.val().same_shape(aggregated.val()))
            throw contract_error("texture_transfer: shape mismatch");
        const auto& lv = levels[static_cast<size_t>(level)];
        ad::Var t = ad::relu(lv.reduce(ad::concat_ch({feat, aggregated})));
        for (const auto& b : lv.blocks) t = b(t);
        return ad::add(feat, lv.out_conv(t));
    }

    // Training/inference forward. `field` carries the matcher correspondences
    // for (lr, ref); pass nullptr to run the no-reference baseline path.
    ad::Var forward(const ad::Var& lr, const ad::Var& ref, const CorrespondenceField* field) const {
        const int lh = lr.val().dim(1), lw = lr.val().dim(2);
        ad::Var f = ad::relu(conv_in(lr));
        for (const auto& b : trunk) f = b(f);

        const bool with_ref = cfg.use_reference && field != nullptr && ref.defined();
        ad::Var p_full, p_half, p_quarter;
        Tensor disp;
        if (with_ref) {
            p_full = ad::relu(rp_full_b(ad::relu(rp_full_a(ref))));
            p_half = ad::relu(rp_half_b(ad::relu(rp_half_a(p_full))));
            p_quarter = ad::relu(rp_quarter_b(ad::relu(rp_quarter_a(p_half))));
            disp = displacement_field(*field, cfg.scale_factor);
        }

        for (int l = 0; l < 3; ++l) {
            if (with_ref) {
                const ad::Var& rfeat = l == 0 ? p_quarter : (l == 1 ? p_half : p_full);
                const int level_scale = 1 << l;
                const int oh = lh * level_scale, ow = lw * level_scale;
                const Tensor p0 = expand_displacement(disp, cfg.match_stride * level_scale,
                                                      static_cast<double>(level_scale), oh, ow);
                ad::Var aggregated = aggregate_level(l, f, rfeat, p0);
                f = texture_transfer(l, f, aggregated);
            }
            if (l == 0) f = nn::pixel_shuffle(up0(f), 2);
            if (l == 1) f = nn::pixel_shuffle(up1(f), 2);
        }
        ad::Var out = tail2(ad::relu(tail1(f)));
        return ad::add(out, nn::resize_bilinear(lr, 4 * lh, 4 * lw));
    }

    ad::Var aggregate_level(int level, const ad::Var& feat, const ad::Var& ref_feat,
                            const Tensor& p0) const {
        const auto& lv = levels[static_cast<size_t>(level)];
        ad::Var gathered = nn::warp_bilinear(ref_feat, ad::Var(p0));
        ad::Var offsets, modulations;
        if (cfg.dyn_agg) {
            OffsetField off = lv.head(feat, gathered);
            offsets = off.offsets;
            modulations = off.modulations;
        } else {
            const int k = lv.kern.k();
            offsets = ad::Var(Tensor({2 * k, p0.dim(1), p0.dim(2)}));
            modulations = ad::Var(Tensor::full({k, p0.dim(1), p0.dim(2)}, 1.0));
        }
        return deform_aggregate(ref_feat, p0, offsets, modulations, lv.kern.w, lv.kern.taps);
    }

    // Inference: output exactly 4x the input size, clamped to [0,1].
    Image restore(const Image& lr, const Image& ref, const Matcher& matcher) const {
        check_image(lr, "restore");
        check_image(ref, "restore(ref)");
        ad::NoGradGuard ng;
        const CorrespondenceField field = matcher.correspond(lr, ref);
        return clamp01(forward(ad::Var(lr), ad::Var(ref), &field).val());
    }

    Image restore_baseline(const Image& lr) const {
        ad::NoGradGuard ng;
        return clamp01(forward(ad::Var(lr), ad::Var(), nullptr).val());
    }
};

inline void model_to_checkpoint(nn::ParamList params, Checkpoint& ck) {
    for (auto& p : params) ck.tensors.emplace_back(p.name, p.var.val());
}

inline void model_from_checkpoint(nn::ParamList params, const Checkpoint& ck) {
    for (auto& p : params) {
        const Tensor& t = ck.get(p.name);
        if (!t.same_shape(p.var.val()))
            throw config_error("checkpoint tensor shape mismatch for " + p.name);
        p.var.mutable_val() = t;
    }
}

}  // namespace refsr
