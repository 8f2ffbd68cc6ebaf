#include <gtest/gtest.h>

#include "refsr/data/synth.hpp"
#include "refsr/vsr/trainer.hpp"

using namespace refsr;

namespace {

VsrConfig tiny_cfg() {
    VsrConfig cfg;
    cfg.ch = 6;
    cfg.feat_blocks = 1;
    cfg.prop_blocks = 1;
    cfg.fusion_blocks = 1;
    cfg.offset_mid = 6;
    cfg.flow.levels = 2;
    cfg.flow.ch = 6;
    return cfg;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

std::vector<Image> panning_clip(std::uint64_t seed, int frames, int size, int step) {
    // crops sliding across one large texture: consistent motion, shared content
    const Image big = render_texture(seed, size + step * frames, size + step * frames);
    std::vector<Image> out;
    for (int i = 0; i < frames; ++i) out.push_back(crop(big, i * step, i * step, size, size));
    return out;
}

}  // namespace

TEST(FlowWarp, ZeroFlowIsBitExactIdentity) {
    Rng rng(1);
    const Tensor feat = random_tensor({3, 6, 7}, rng);
    const Tensor zero({2, 6, 7});
    EXPECT_TRUE(flow_warp(feat, zero).equals(feat));
}

TEST(FlowWarp, IntegerFlowShiftsWithZeroFill) {
    Rng rng(2);
    const Tensor feat = random_tensor({2, 4, 5}, rng);
    Tensor flow({2, 4, 5});
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) flow.at(0, y, x) = 1.0;  // dx = 1
    const Tensor out = flow_warp(feat, flow);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 4; ++x) EXPECT_DOUBLE_EQ(out.at(c, y, x), feat.at(c, y, x + 1));
            EXPECT_DOUBLE_EQ(out.at(c, y, 4), 0.0);  // zero-filled column
        }
}

TEST(FlowWarp, FractionalFlowOnRampMatchesBilinearOracle) {
    Tensor feat({1, 3, 6});
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 6; ++x) feat.at(0, y, x) = 2.0 * x;  // linear ramp in x
    Tensor flow({2, 3, 6});
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 6; ++x) flow.at(0, y, x) = 0.5;
    const Tensor out = flow_warp(feat, flow);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x + 1 < 6; ++x)
            EXPECT_NEAR(out.at(0, y, x), 2.0 * x + 1.0, 1e-6);  // midpoint values
}

TEST(FlowEstimator, SelfPairGivesExactlyZeroFlow) {
    Rng rng(3);
    FlowEstimator est(FlowNetConfig{2, 6}, rng);
    const Image a = render_texture(4, 16, 16);
    const Tensor flow = estimate_flow(a, a, est);
    EXPECT_EQ(flow.shape(), (std::vector<int>{2, 16, 16}));
    EXPECT_EQ(flow.abs_max(), 0.0);
    Image odd({3, 15, 16});
    EXPECT_THROW(estimate_flow(odd, odd, est), config_error);
}

TEST(FlowEstimator, RecoversTranslationsAndNearZeroSelfFlow) {
    Rng rng(6);
    FlowEstimator est(FlowNetConfig{3, 12}, rng);  // default (untrained refiners)

    // self-pairs: mean |flow| <= 0.5 px over 10 pairs
    double self_total = 0;
    for (int i = 0; i < 10; ++i) {
        const Image a = render_texture(static_cast<std::uint64_t>(100 + i), 32, 32);
        const Tensor flow = estimate_flow(a, a, est);
        double s = 0;
        for (std::int64_t k = 0; k < flow.size(); ++k) s += std::fabs(flow[k]);
        self_total += s / flow.size();
    }
    EXPECT_LE(self_total / 10.0, 0.5);

    // known 2 px rightward shift: interior flow ~ (2, 0) within 0.5 px mean
    double err_total = 0;
    int count = 0;
    for (int i = 0; i < 5; ++i) {
        const Image a = render_texture(static_cast<std::uint64_t>(200 + i), 32, 32);
        Homography shift;
        shift.m = {1, 0, 2, 0, 1, 0, 0, 0, 1};
        const Image b = warp_image(a, shift);
        const Tensor flow = estimate_flow(a, b, est);
        for (int y = 6; y < 26; ++y)
            for (int x = 6; x < 26; ++x) {
                err_total += std::hypot(flow.at(0, y, x) - 2.0, flow.at(1, y, x));
                ++count;
            }
    }
    EXPECT_LE(err_total / count, 0.5);
}

TEST(FlowEstimator, RefinerTrainsWithoutDegrading) {
    Rng rng(7);
    FlowEstimator est(FlowNetConfig{3, 8}, rng);
    const Image a = render_texture(300, 32, 32);
    Homography shift;
    shift.m = {1, 0, 1.5, 0, 1, -0.5, 0, 0, 1};
    const Image b = warp_image(a, shift);
    auto mean_err = [&]() {
        const Tensor flow = estimate_flow(a, b, est);
        double e = 0;
        int n = 0;
        for (int y = 6; y < 26; ++y)
            for (int x = 6; x < 26; ++x) {
                e += std::hypot(flow.at(0, y, x) - 1.5, flow.at(1, y, x) + 0.5);
                ++n;
            }
        return e / n;
    };
    const double before = mean_err();
    pretrain_flow_synthetic(est, 60, 42);
    const double after = mean_err();
    EXPECT_LE(after, std::max(0.5, before * 1.5));  // training must not wreck the LK core
}

TEST(Propagate, SingleFrameClipIsDefined) {
    Rng rng(7);
    RefVideoSR model(tiny_cfg(), rng);
    NccMatcher matcher;
    const std::vector<Image> one = {bicubic_downsample(render_texture(8, 32, 32), 4)};
    ad::NoGradGuard ng;
    const auto outs = model.forward_clip(one, render_texture(9, 32, 32), matcher);
    ASSERT_EQ(outs.size(), 1u);
    EXPECT_TRUE(outs[0].val().all_finite());
}

TEST(Propagate, ForwardCausalityAndBackwardAnticausality) {
    Rng rng(10);
    RefVideoSR model(tiny_cfg(), rng);
    auto frames_hr = panning_clip(11, 3, 32, 2);
    std::vector<Image> frames;
    for (const auto& f : frames_hr) frames.push_back(bicubic_downsample(f, 4));
    const Image ref = frames_hr[0];
    NccMatcher matcher;

    ad::NoGradGuard ng;
    auto hidden_of = [&](const std::vector<Image>& fr, bool forward, int index) {
        std::vector<ad::Var> feats;
        for (const auto& f : fr) feats.push_back(model.extract_feat(ad::Var(f)));
        const int n = static_cast<int>(fr.size());
        ad::Var zero(Tensor({model.cfg.ch, fr[0].dim(1), fr[0].dim(2)}));
        std::vector<ad::Var> h(static_cast<size_t>(n));
        if (forward) {
            for (int i = 0; i < n; ++i) {
                if (i == 0) {
                    h[0] = model.propagate_step(true, feats[0], zero, ad::Var());
                } else {
                    ad::Var fl = model.flow.estimate_var(ad::Var(fr[static_cast<size_t>(i)]),
                                                         ad::Var(fr[static_cast<size_t>(i - 1)]));
                    h[static_cast<size_t>(i)] = model.propagate_step(true, feats[static_cast<size_t>(i)],
                                                                     h[static_cast<size_t>(i - 1)], fl);
                }
            }
        } else {
            for (int i = n - 1; i >= 0; --i) {
                if (i == n - 1) {
                    h[static_cast<size_t>(i)] = model.propagate_step(false, feats[static_cast<size_t>(i)], zero, ad::Var());
                } else {
                    ad::Var fl = model.flow.estimate_var(ad::Var(fr[static_cast<size_t>(i)]),
                                                         ad::Var(fr[static_cast<size_t>(i + 1)]));
                    h[static_cast<size_t>(i)] = model.propagate_step(false, feats[static_cast<size_t>(i)],
                                                                     h[static_cast<size_t>(i + 1)], fl);
                }
            }
        }
        return h[static_cast<size_t>(index)].val();
    };

    // perturb the last frame: forward hidden at frame 0 and 1 unchanged
    std::vector<Image> perturbed = frames;
    for (std::int64_t i = 0; i < perturbed[2].size(); ++i)
        perturbed[2][i] = std::min(1.0, perturbed[2][i] + 0.25);
    EXPECT_TRUE(hidden_of(frames, true, 0).equals(hidden_of(perturbed, true, 0)));
    EXPECT_TRUE(hidden_of(frames, true, 1).equals(hidden_of(perturbed, true, 1)));
    EXPECT_FALSE(hidden_of(frames, true, 2).equals(hidden_of(perturbed, true, 2)));

    // perturb the first frame: backward hidden at frame 2 unchanged
    std::vector<Image> perturbed0 = frames;
    for (std::int64_t i = 0; i < perturbed0[0].size(); ++i)
        perturbed0[0][i] = std::min(1.0, perturbed0[0][i] + 0.25);
    EXPECT_TRUE(hidden_of(frames, false, 2).equals(hidden_of(perturbed0, false, 2)));
    EXPECT_FALSE(hidden_of(frames, false, 0).equals(hidden_of(perturbed0, false, 0)));
}

TEST(AttentionFuse, MaskRangeAndLimitBehaviors) {
    Rng rng(12);
    AttentionHead head(5, rng);
    const Tensor f = random_tensor({5, 6, 6}, rng, 2.0);
    const Tensor h = random_tensor({5, 6, 6}, rng, 2.0);
    ad::NoGradGuard ng;
    const Tensor mask = head.mask(ad::Var(f), ad::Var(h)).val();
    EXPECT_GE(mask.min_all(), 0.0);
    EXPECT_LE(mask.max_all(), 1.0);

    // saturated head: mask identically 1, output equals the branch feature
    AttentionHead sat(5, rng);
    sat.a2.zero_init();
    for (std::int64_t i = 0; i < sat.a2.b.val().size(); ++i) sat.a2.b.mutable_val()[i] = 1000.0;
    const Tensor fused = sat.fuse(ad::Var(f), ad::Var(h)).val();
    EXPECT_TRUE(fused.equals(h));

    // zero-init head: mask identically 0.5, output = h / 2
    AttentionHead zero(5, rng);
    zero.a2.zero_init();
    const Tensor half = zero.fuse(ad::Var(f), ad::Var(h)).val();
    for (std::int64_t i = 0; i < h.size(); ++i) EXPECT_DOUBLE_EQ(half[i], 0.5 * h[i]);

    EXPECT_THROW(head.mask(ad::Var(f), ad::Var(random_tensor({5, 6, 5}, rng))), contract_error);
}

TEST(Charbonnier, AnalyticCasesOracleAndSymmetry) {
    Rng rng(13);
    const Tensor gt = random_tensor({3, 4, 4}, rng);
    EXPECT_DOUBLE_EQ(charbonnier_loss(ad::Var(gt), gt).val().item(), 1e-8);  // rho(0) = eps
    Tensor off = gt;
    for (std::int64_t i = 0; i < off.size(); ++i) off[i] += 0.3;
    EXPECT_NEAR(charbonnier_loss(ad::Var(off), gt).val().item(), std::sqrt(0.09 + 1e-16), 1e-12);
    const Tensor pred = random_tensor({3, 4, 4}, rng);
    double oracle = 0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - gt[i];
        oracle += std::sqrt(d * d + 1e-16);
    }
    oracle /= pred.size();
    EXPECT_NEAR(charbonnier_loss(ad::Var(pred), gt).val().item(), oracle, 1e-10);
    EXPECT_NEAR(charbonnier_loss(ad::Var(pred), gt).val().item(),
                charbonnier_loss(ad::Var(gt), pred).val().item(), 1e-15);
    EXPECT_GE(charbonnier_loss(ad::Var(pred), gt).val().item(), 1e-8);
}

TEST(Charbonnier, GradientMatchesFiniteDifferences) {
    Rng rng(14);
    const Tensor gt = random_tensor({2, 3, 3}, rng);
    const Tensor p0 = random_tensor({2, 3, 3}, rng);
    ad::Var pv(p0, true);
    const Tensor g = ad::grad_of(charbonnier_loss(pv, gt), pv);
    auto value = [&](const Tensor& t) {
        ad::NoGradGuard ng;
        return charbonnier_loss(ad::Var(t), gt).val().item();
    };
    const double h = 1e-6;
    for (std::int64_t i = 0; i < p0.size(); ++i) {
        Tensor p = p0, m = p0;
        p[i] += h;
        m[i] -= h;
        const double fd = (value(p) - value(m)) / (2 * h);
        EXPECT_NEAR(fd, g[i], 1e-3 * std::max(1.0, std::fabs(fd)));
    }
}

TEST(RestoreClip, ShapesDeterminismAndRefBranchAblation) {
    Rng rng(15);
    RefVideoSR model(tiny_cfg(), rng);
    NccMatcher matcher;
    auto frames_hr = panning_clip(16, 5, 128, 8);  // 32x32 LR frames
    VideoClip clip;
    for (const auto& f : frames_hr) clip.frames.push_back(bicubic_downsample(f, 4));
    const Image ref = frames_hr[0];

    const VideoClip out = model.restore_clip(clip, ref, matcher);
    ASSERT_EQ(out.frames.size(), 5u);
    for (const auto& f : out.frames) {
        EXPECT_EQ(f.shape(), (std::vector<int>{3, 128, 128}));
        EXPECT_TRUE(f.all_finite());
    }
    const VideoClip out2 = model.restore_clip(clip, ref, matcher);
    for (size_t i = 0; i < 5; ++i) EXPECT_TRUE(out.frames[i].equals(out2.frames[i]));

    // zeroing the reference-branch aggregation kernel reproduces the
    // no-reference bidirectional baseline exactly
    RefVideoSR ablated = model;
    ablated.ref_kern.w = ad::Var(Tensor::zeros_like(model.ref_kern.w.val()), true);
    const VideoClip zeroed = ablated.restore_clip(clip, ref, matcher);
    RefVideoSR baseline = model;
    baseline.cfg.use_reference = false;
    const VideoClip base = baseline.restore_clip(clip, ref, matcher);
    for (size_t i = 0; i < 5; ++i) EXPECT_TRUE(zeroed.frames[i].equals(base.frames[i]));

    VideoClip bad;
    bad.frames = {clip.frames[0]};
    EXPECT_THROW(bad.validate(), contract_error);
}

TEST(ReferenceBranch, FourTimesLatticeAndPurityAcrossFrames) {
    Rng rng(17);
    RefVideoSR model(tiny_cfg(), rng);
    NccMatcher matcher;
    const Image frame = bicubic_downsample(render_texture(18, 32, 32), 4);
    const Image ref = render_texture(18, 32, 32);
    ad::NoGradGuard ng;
    ad::Var ref_feat = ad::relu(model.ref_b(ad::relu(model.ref_a(ad::Var(ref)))));
    ad::Var feat_up = model.up_feat(model.extract_feat(ad::Var(frame)));
    const Tensor a = model.reference_branch_var(feat_up, frame, ref, ref_feat, matcher).val();
    EXPECT_EQ(a.shape(), (std::vector<int>{6, 32, 32}));  // 4x the 8x8 frame
    const Tensor b = model.reference_branch_var(feat_up, frame, ref, ref_feat, matcher).val();
    EXPECT_TRUE(a.equals(b));  // no cross-call state
}

TEST(TrainVsr, ShortRunIsDeterministicAndDecreases) {
    auto run = [&](std::uint64_t seed) {
        Rng rng(seed);
        RefVideoSR model(tiny_cfg(), rng);
        NccMatcher matcher;
        std::vector<VsrSample> clips;
        VsrSample s;
        s.hr_frames = panning_clip(19, 3, 32, 2);
        s.ref = s.hr_frames[0];
        clips.push_back(std::move(s));
        VsrTrainConfig cfg;
        cfg.iters = 16;
        cfg.batch_size = 1;
        cfg.flow_pretrain_steps = 0;
        cfg.seed = seed;
        cfg.learning_rate = 1e-3;
        auto result = train_vsr(model, matcher, clips, cfg);
        return std::make_pair(result.loss_history, model.conv_in.w.val());
    };
    auto [h1, w1] = run(3);
    auto [h2, w2] = run(3);
    EXPECT_EQ(h1, h2);
    EXPECT_TRUE(w1.equals(w2));
    double early = 0, late = 0;
    for (int i = 0; i < 4; ++i) {
        early += h1[static_cast<size_t>(i)];
        late += h1[h1.size() - 1 - static_cast<size_t>(i)];
    }
    EXPECT_LT(late, early);
}
