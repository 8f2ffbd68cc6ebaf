// Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
// Training-based criteria use desk-scale configs; the learning-effect and
// distillation criteria share one matcher-training bundle.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>

#include "refsr/pipeline/run.hpp"

using namespace refsr;
namespace fs = std::filesystem;

namespace {

struct CriterionReporter {
    int num;
    const char* name;
    ~CriterionReporter() {
        std::printf("[ACCEPTANCE] criterion %02d %-28s %s\n", num, name,
                    testing::Test::HasFailure() ? "FAIL" : "PASS");
        std::fflush(stdout);
    }
};

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Tensor random_rows(int n, int d, Rng& rng, double scale = 1.0) {
    Tensor t({n, d});
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

DescriptorGrid make_grid(int h, int w, int d, Rng& rng) {
    DescriptorGrid g;
    g.h = h;
    g.w = w;
    g.dim = d;
    g.data = random_rows(h * w, d, rng);
    return g;
}

std::vector<Image> panning_clip(std::uint64_t seed, int frames, int size, int step) {
    const int big = size + step * frames;
    const Image src = render_texture(seed, big, big, big / 64.0);
    std::vector<Image> out;
    for (int i = 0; i < frames; ++i) out.push_back(crop(src, i * step, i * step, size, size));
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// 1. Oracle equivalence: match() and correlation_volume() vs exhaustive
//    double-loop oracles on 200 random grids.

TEST(Acceptance, C01_MatchingOracleEquivalence) {
    CriterionReporter rep{1, "oracle equivalence"};
    const double t0 = now_seconds();
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        const int h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8);
        const int rh = rng.uniform_int(1, 8), rw = rng.uniform_int(1, 8);
        const int d = rng.uniform_int(2, 16);
        const DescriptorGrid a = make_grid(h, w, d, rng);
        const DescriptorGrid b = make_grid(rh, rw, d, rng);

        const CorrespondenceField field = match(a, b);
        const double tau = rng.uniform(0.05, 1.0);
        const CorrelationVolume vol = correlation_volume(a, b, tau);

        for (int p = 0; p < a.cells(); ++p) {
            // brute-force argmax with first-max tie break
            double best = -2.0;
            int best_q = 0;
            std::vector<double> sims(static_cast<size_t>(b.cells()));
            for (int q = 0; q < b.cells(); ++q) {
                double dot = 0, na = 0, nb = 0;
                for (int j = 0; j < d; ++j) {
                    const double x = a.data.at(p, j), y = b.data.at(q, j);
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                const double s = (na > 0 && nb > 0) ? dot / std::sqrt(na * nb) : 0.0;
                sims[static_cast<size_t>(q)] = s;
                if (s > best) {
                    best = s;
                    best_q = q;
                }
            }
            const int got = static_cast<int>(field.target[static_cast<size_t>(p)].y) * rw +
                            static_cast<int>(field.target[static_cast<size_t>(p)].x);
            ASSERT_EQ(got, best_q);

            double z = 0;
            double mx = *std::max_element(sims.begin(), sims.end());
            std::vector<double> expv(sims.size());
            for (size_t q = 0; q < sims.size(); ++q) {
                expv[q] = std::exp((sims[q] - mx) / tau);
                z += expv[q];
            }
            for (size_t q = 0; q < sims.size(); ++q)
                ASSERT_NEAR(vol.data.at(p, static_cast<int>(q)), expv[q] / z, 1e-6);
        }
    }
    EXPECT_LT(now_seconds() - t0, 60.0);
}

// ---------------------------------------------------------------------------
// 2. Gradient checks in float64, relative error <= 1e-3, >= 20 instances per
//    operation, kink/tie neighborhoods excluded.

namespace {

template <typename ValueFn>
bool fd_check(const Tensor& x0, const Tensor& analytic, ValueFn value, double h = 1e-5,
              double tol = 1e-3) {
    for (std::int64_t i = 0; i < x0.size(); ++i) {
        Tensor p = x0, m = x0;
        p[i] += h;
        m[i] -= h;
        const double fd = (value(p) - value(m)) / (2 * h);
        const double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-6});
        if (std::fabs(fd - analytic[i]) / denom > tol) return false;
    }
    return true;
}

}  // namespace

TEST(Acceptance, C02_GradientChecks) {
    CriterionReporter rep{2, "gradient checks"};
    const double t0 = now_seconds();

    // margin loss
    {
        Rng rng(201);
        ContrastiveLossConfig cfg;
        cfg.threshold = 1.0;
        int checked = 0;
        for (int trial = 0; trial < 200 && checked < 20; ++trial) {
            const Tensor in0 = random_rows(9, 3, rng);
            const Tensor ref0 = random_rows(16, 3, rng);
            std::vector<int> gt(9);
            for (auto& g : gt) g = rng.uniform_int(0, 15);
            // stability filter: argmin gaps and hinge distance
            bool stable = true;
            for (int p = 0; p < 9 && stable; ++p) {
                std::vector<double> cands;
                const int pp = gt[static_cast<size_t>(p)];
                for (int q = 0; q < 16; ++q)
                    if (std::max(std::abs(q % 4 - pp % 4), std::abs(q / 4 - pp / 4)) > 1)
                        cands.push_back([&] {
                            double s = 0;
                            for (int j = 0; j < 3; ++j) {
                                const double dd = in0.at(p, j) - ref0.at(q, j);
                                s += dd * dd;
                            }
                            return s;
                        }());
                for (int k = 0; k < 9; ++k)
                    if (std::max(std::abs(k % 3 - p % 3), std::abs(k / 3 - p / 3)) > 1)
                        cands.push_back([&] {
                            double s = 0;
                            for (int j = 0; j < 3; ++j) {
                                const double dd = ref0.at(pp, j) - in0.at(k, j);
                                s += dd * dd;
                            }
                            return s;
                        }());
                std::sort(cands.begin(), cands.end());
                if (cands.size() >= 2 && cands[1] - cands[0] < 1e-2) stable = false;
                double pos = 0;
                for (int j = 0; j < 3; ++j) {
                    const double dd = in0.at(p, j) - ref0.at(pp, j);
                    pos += dd * dd;
                }
                if (std::fabs(cfg.margin + pos - cands[0]) < 1e-2) stable = false;
            }
            if (!stable) continue;
            ++checked;
            auto value_in = [&](const Tensor& t) {
                ad::NoGradGuard ng;
                return triplet_margin_loss(ad::Var(t), 3, 3, ad::Var(ref0), 4, 4, gt, cfg)
                    .loss.val()
                    .item();
            };
            auto value_ref = [&](const Tensor& t) {
                ad::NoGradGuard ng;
                return triplet_margin_loss(ad::Var(in0), 3, 3, ad::Var(t), 4, 4, gt, cfg)
                    .loss.val()
                    .item();
            };
            ad::Var av(in0, true), bv(ref0, true);
            auto res = triplet_margin_loss(av, 3, 3, bv, 4, 4, gt, cfg);
            auto grads = ad::backward_collect(res.loss);
            EXPECT_TRUE(fd_check(in0, grads.at(av.node().get()).val(), value_in)) << "margin/in";
            EXPECT_TRUE(fd_check(ref0, grads.at(bv.node().get()).val(), value_ref)) << "margin/ref";
        }
        ASSERT_GE(checked, 20);
    }

    // KL distillation loss
    {
        Rng rng(202);
        for (int trial = 0; trial < 20; ++trial) {
            Tensor teacher;
            {
                ad::NoGradGuard ng;
                teacher = correlation_volume_var(ad::Var(random_rows(3, 4, rng)),
                                                 ad::Var(random_rows(5, 4, rng)), 0.15)
                              .val();
            }
            const Tensor a0 = random_rows(3, 4, rng);
            const Tensor b0 = random_rows(5, 4, rng);
            auto value = [&](const Tensor& a, const Tensor& b) {
                ad::NoGradGuard ng;
                return correlation_kl_loss(teacher,
                                           correlation_volume_var(ad::Var(a), ad::Var(b), 0.15))
                    .val()
                    .item();
            };
            ad::Var av(a0, true), bv(b0, true);
            auto grads =
                ad::backward_collect(correlation_kl_loss(teacher, correlation_volume_var(av, bv, 0.15)));
            EXPECT_TRUE(fd_check(a0, grads.at(av.node().get()).val(),
                                 [&](const Tensor& t) { return value(t, b0); }))
                << "kl/in";
            EXPECT_TRUE(fd_check(b0, grads.at(bv.node().get()).val(),
                                 [&](const Tensor& t) { return value(a0, t); }))
                << "kl/ref";
        }
    }

    // Charbonnier
    {
        Rng rng(203);
        for (int trial = 0; trial < 20; ++trial) {
            const Tensor gt = random_rows(4, 5, rng).reshaped({1, 4, 5});
            const Tensor p0 = random_rows(4, 5, rng).reshaped({1, 4, 5});
            ad::Var pv(p0, true);
            const Tensor g = ad::grad_of(charbonnier_loss(pv, gt), pv);
            EXPECT_TRUE(fd_check(p0, g, [&](const Tensor& t) {
                ad::NoGradGuard ng;
                return charbonnier_loss(ad::Var(t), gt).val().item();
            })) << "charbonnier";
        }
    }

    // perceptual with identity extractor
    {
        Rng rng(204);
        for (int trial = 0; trial < 20; ++trial) {
            Tensor hr = random_rows(16, 3, rng).reshaped({3, 4, 4});
            Tensor sr0 = random_rows(16, 3, rng).reshaped({3, 4, 4});
            ad::Var sv(sr0, true);
            const Tensor g = ad::grad_of(perceptual_loss(sv, hr, identity_extractor()), sv);
            EXPECT_TRUE(fd_check(sr0, g, [&](const Tensor& t) {
                ad::NoGradGuard ng;
                return perceptual_loss(ad::Var(t), hr, identity_extractor()).val().item();
            })) << "perceptual";
        }
    }

    // dynamic aggregation, all four differentiable inputs
    {
        Rng rng(205);
        const auto taps = square_taps(3);
        for (int trial = 0; trial < 20; ++trial) {
            const Tensor ref = random_rows(64, 2, rng).reshaped({2, 8, 8});
            Tensor p0({2, 2, 2}), off({18, 2, 2}), mod({9, 2, 2});
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x) {
                    p0.at(0, y, x) = 2.0 + rng.uniform(0.3, 0.7);
                    p0.at(1, y, x) = 2.0 + rng.uniform(0.3, 0.7);
                    for (int k = 0; k < 9; ++k) {
                        off.at(2 * k, y, x) = rng.uniform(-0.1, 0.1);
                        off.at(2 * k + 1, y, x) = rng.uniform(-0.1, 0.1);
                        mod.at(k, y, x) = rng.uniform(0.2, 0.9);
                    }
                }
            const Tensor kern = random_rows(9, 6, rng, 0.5).reshaped({3, 2, 9});
            auto value = [&](const Tensor& r, const Tensor& o, const Tensor& m, const Tensor& k) {
                ad::NoGradGuard ng;
                return ad::sum_all(ad::square(deform_aggregate(ad::Var(r), p0, ad::Var(o),
                                                               ad::Var(m), ad::Var(k), taps)))
                    .val()
                    .item();
            };
            ad::Var rv(ref, true), ov(off, true), mv(mod, true), kv(kern, true);
            auto grads = ad::backward_collect(
                ad::sum_all(ad::square(deform_aggregate(rv, p0, ov, mv, kv, taps))));
            EXPECT_TRUE(fd_check(ref, grads.at(rv.node().get()).val(),
                                 [&](const Tensor& t) { return value(t, off, mod, kern); }, 1e-6))
                << "agg/ref";
            EXPECT_TRUE(fd_check(off, grads.at(ov.node().get()).val(),
                                 [&](const Tensor& t) { return value(ref, t, mod, kern); }, 1e-6))
                << "agg/off";
            EXPECT_TRUE(fd_check(mod, grads.at(mv.node().get()).val(),
                                 [&](const Tensor& t) { return value(ref, off, t, kern); }, 1e-6))
                << "agg/mod";
            EXPECT_TRUE(fd_check(kern, grads.at(kv.node().get()).val(),
                                 [&](const Tensor& t) { return value(ref, off, mod, t); }, 1e-6))
                << "agg/kern";
        }
    }

    EXPECT_LT(now_seconds() - t0, 300.0);
}

// ---------------------------------------------------------------------------
// 3. Invariance suite.

TEST(Acceptance, C03_InvarianceSuite) {
    CriterionReporter rep{3, "invariance suite"};
    Rng rng(301);

    // argmax scale invariance, exact
    {
        const DescriptorGrid a = make_grid(4, 4, 6, rng);
        const DescriptorGrid b = make_grid(5, 5, 6, rng);
        const CorrespondenceField base = match(a, b);
        for (double s : {1e-8, 0.37, 42.0, 1e8}) {
            DescriptorGrid a2 = a;
            for (int j = 0; j < 6; ++j) a2.data.at(7, j) *= s;
            const CorrespondenceField f = match(a2, b);
            for (size_t p = 0; p < base.target.size(); ++p) {
                ASSERT_EQ(f.target[p].x, base.target[p].x);
                ASSERT_EQ(f.target[p].y, base.target[p].y);
            }
        }
    }

    // row-stochastic volumes within 1e-6, entries nonnegative
    {
        const DescriptorGrid a = make_grid(6, 6, 8, rng);
        const DescriptorGrid b = make_grid(5, 7, 8, rng);
        const CorrelationVolume vol = correlation_volume(a, b, 0.15);
        for (int p = 0; p < 36; ++p) {
            double s = 0;
            for (int q = 0; q < 35; ++q) {
                ASSERT_GE(vol.data.at(p, q), 0.0);
                s += vol.data.at(p, q);
            }
            ASSERT_NEAR(s, 1.0, 1e-6);
        }
    }

    // flow_warp zero-flow identity, exact
    {
        const Tensor feat = random_rows(60, 2, rng).reshaped({2, 6, 10});
        ASSERT_TRUE(flow_warp(feat, Tensor({2, 6, 10})).equals(feat));
    }

    // depth-to-space bijectivity, exact
    {
        const Tensor x = random_rows(24, 5, rng).reshaped({12, 2, 5});
        ad::NoGradGuard ng;
        ASSERT_TRUE(nn::pixel_unshuffle(nn::pixel_shuffle(ad::Var(x), 2), 2).val().equals(x));
    }

    // reference-branch-zeroed == no-reference baseline, bit-exact
    {
        VsrConfig cfg;
        cfg.ch = 6;
        cfg.feat_blocks = 1;
        cfg.prop_blocks = 1;
        cfg.fusion_blocks = 1;
        cfg.offset_mid = 6;
        Rng mrng(303);
        RefVideoSR model(cfg, mrng);
        NccMatcher matcher;
        auto frames_hr = panning_clip(304, 3, 64, 4);
        VideoClip clip;
        for (const auto& f : frames_hr) clip.frames.push_back(bicubic_downsample(f, 4));
        RefVideoSR zeroed = model;
        zeroed.ref_kern.w = ad::Var(Tensor::zeros_like(model.ref_kern.w.val()), true);
        RefVideoSR baseline = model;
        baseline.cfg.use_reference = false;
        const VideoClip a = zeroed.restore_clip(clip, frames_hr[0], matcher);
        const VideoClip b = baseline.restore_clip(clip, frames_hr[0], matcher);
        for (size_t i = 0; i < a.frames.size(); ++i) ASSERT_TRUE(a.frames[i].equals(b.frames[i]));
    }

    // forward/backward causality, exact
    {
        VsrConfig cfg;
        cfg.ch = 6;
        cfg.feat_blocks = 1;
        cfg.prop_blocks = 1;
        cfg.fusion_blocks = 1;
        cfg.offset_mid = 6;
        Rng mrng(305);
        RefVideoSR model(cfg, mrng);
        auto frames_hr = panning_clip(306, 3, 32, 2);
        std::vector<Image> frames;
        for (const auto& f : frames_hr) frames.push_back(bicubic_downsample(f, 4));
        ad::NoGradGuard ng;
        auto fwd_hidden = [&](const std::vector<Image>& fr, int idx) {
            ad::Var h(Tensor({cfg.ch, fr[0].dim(1), fr[0].dim(2)}));
            for (int i = 0; i <= idx; ++i) {
                ad::Var feat = model.extract_feat(ad::Var(fr[static_cast<size_t>(i)]));
                ad::Var fl;
                if (i > 0)
                    fl = model.flow.estimate_var(ad::Var(fr[static_cast<size_t>(i)]),
                                                 ad::Var(fr[static_cast<size_t>(i - 1)]));
                h = model.propagate_step(true, feat, h, fl);
            }
            return h.val();
        };
        std::vector<Image> perturbed = frames;
        for (std::int64_t i = 0; i < perturbed[2].size(); ++i)
            perturbed[2][i] = std::min(1.0, perturbed[2][i] + 0.3);
        ASSERT_TRUE(fwd_hidden(frames, 1).equals(fwd_hidden(perturbed, 1)));
        ASSERT_FALSE(fwd_hidden(frames, 2).equals(fwd_hidden(perturbed, 2)));
    }
}

// ---------------------------------------------------------------------------
// 4. Homography geometry.

TEST(Acceptance, C04_HomographyGeometry) {
    CriterionReporter rep{4, "homography geometry"};
    Rng rng(401);
    for (int trial = 0; trial < 20; ++trial) {
        std::array<Vec2, 4> src = {Vec2{0, 0}, Vec2{160, 0}, Vec2{160, 160}, Vec2{0, 160}};
        std::array<Vec2, 4> dst;
        for (int i = 0; i < 4; ++i)
            dst[i] = {src[i].x + rng.uniform(-24.0, 24.0), src[i].y + rng.uniform(-24.0, 24.0)};
        const Homography h = Homography::from_points(src, dst);
        for (int i = 0; i < 4; ++i) {
            const Vec2 p = h.apply(src[i].x, src[i].y);
            ASSERT_NEAR(p.x, dst[i].x, 1e-8);
            ASSERT_NEAR(p.y, dst[i].y, 1e-8);
        }
    }
    HomographySampleConfig cfg;
    for (int trial = 0; trial < 5; ++trial) {
        const Homography h = sample_homography(rng, cfg);
        const Homography hinv = h.inverse();
        for (int i = 0; i < 1000; ++i) {
            const double x = rng.uniform(0.0, 160.0), y = rng.uniform(0.0, 160.0);
            const Vec2 q = h.apply(x, y);
            const Vec2 p = hinv.apply(q.x, q.y);
            ASSERT_NEAR(p.x, x, 1e-6);
            ASSERT_NEAR(p.y, y, 1e-6);
        }
    }
}

// ---------------------------------------------------------------------------
// Shared matcher-training bundle for criteria 5-7.

namespace {

struct MatcherBundle {
    MatcherTrainConfig cfg;
    MatcherNets teacher;
    MatcherNets student_kl;    // alpha_kl = 15 (paper default)
    MatcherNets student_nokl;  // alpha_kl = 0 ablation
    std::vector<TrainPair> heldout_train_dist;  // training-distribution held-out pairs
    std::map<std::string, std::vector<TrainPair>> heldout_groups;
};

std::vector<TrainPair> synth_pairs(int n, int crop, const HomographySampleConfig& tcfg,
                                   std::uint64_t seed) {
    std::vector<TrainPair> pairs;
    PairConfig pcfg;
    pcfg.crop = crop;
    pcfg.transform = tcfg;
    Rng root(seed);
    for (int i = 0; i < n; ++i) {
        const Image hr =
            render_texture(root.fork(static_cast<std::uint64_t>(i)).next_u64(), crop, crop);
        pairs.push_back(
            make_homography_pair(hr, pcfg, root.fork(7000 + static_cast<std::uint64_t>(i)).next_u64()));
    }
    return pairs;
}

const MatcherBundle& bundle() {
    static MatcherBundle* b = [] {
        auto* bb = new MatcherBundle();
        bb->cfg.encoder.channels = {10, 14, 20};
        bb->cfg.encoder.descriptor_dim = 20;
        bb->cfg.loss.batch_size = 8;
        bb->cfg.loss.threshold = 4.0;
        bb->cfg.steps = 500;
        const int crop = 64;

        // moderate training transformations (large ones excluded)
        HomographySampleConfig train_tf;
        train_tf.scale_min = 0.85;
        train_tf.scale_max = 1.18;
        train_tf.rotation_min_deg = 0.0;
        train_tf.rotation_max_deg = 15.0;
        train_tf.jitter_frac = 0.04;
        auto train_pairs = synth_pairs(500, crop, train_tf, 5001);
        bb->heldout_train_dist = synth_pairs(40, crop, train_tf, 6001);

        for (const char* g : {"small", "medium", "large"}) {
            const TransformBenchmarkSpec spec = benchmark_group_spec(g, 6100);
            HomographySampleConfig tf;
            tf.scale_min = spec.scale_min;
            tf.scale_max = spec.scale_max;
            tf.rotation_min_deg = spec.rotation_min_deg;
            tf.rotation_max_deg = spec.rotation_max_deg;
            tf.jitter_frac = 0.0;
            bb->heldout_groups[g] = synth_pairs(12, crop, tf, 6200 + spec.rotation_max_deg);
        }

        std::printf("[bundle] training teacher (%d steps)...\n", bb->cfg.steps / 2);
        std::fflush(stdout);
        Rng trng(50);
        bb->teacher = MatcherNets(bb->cfg.encoder, trng);
        MatcherTrainConfig tcfg = bb->cfg;
        tcfg.steps = bb->cfg.steps / 2;
        tcfg.seed = 51;
        tcfg.loss.kl_weight = 0.0;
        train_teacher(bb->teacher, train_pairs, tcfg, [](int s, double l) {
            if (s % 50 == 0) {
                std::printf("  teacher %d loss %.4f\n", s, l);
                std::fflush(stdout);
            }
        });
        auto tp = bb->teacher.params();
        nn::set_requires_grad(tp, false);

        const auto train_one = [&](double alpha, std::uint64_t seed) {
            Rng srng(seed);
            MatcherNets student(bb->cfg.encoder, srng);
            MatcherTrainConfig scfg = bb->cfg;
            scfg.seed = seed;
            scfg.loss.kl_weight = alpha;
            std::printf("[bundle] training student alpha=%.0f (%d steps)...\n", alpha, scfg.steps);
            std::fflush(stdout);
            train_student(student, bb->teacher, train_pairs, scfg, [](int s, double l) {
                if (s % 50 == 0) {
                    std::printf("  student %d loss %.4f\n", s, l);
                    std::fflush(stdout);
                }
            });
            return student;
        };
        bb->student_kl = train_one(15.0, 52);
        bb->student_nokl = train_one(0.0, 52);
        return bb;
    }();
    return *b;
}

}  // namespace

// ---------------------------------------------------------------------------
// 5. Matcher learning effect: held-out AEE ordered by transformation group
//    and below the fixed-feature NCC baseline at small transformations.

TEST(Acceptance, C05_MatcherLearningEffect) {
    CriterionReporter rep{5, "matcher learning effect"};
    const double t0 = now_seconds();
    const MatcherBundle& b = bundle();
    const ContrastiveMatcher student = b.student_kl.matcher(1);
    const NccMatcher ncc;

    std::map<std::string, double> aee_by_group;
    for (const auto& [group, pairs] : b.heldout_groups)
        aee_by_group[group] = matcher_aee(student, pairs);
    const double ncc_small = matcher_aee(ncc, b.heldout_groups.at("small"));

    std::printf("  held-out AEE: small %.3f | medium %.3f | large %.3f | ncc(small) %.3f\n",
                aee_by_group["small"], aee_by_group["medium"], aee_by_group["large"], ncc_small);
    std::printf("  bundle+eval wall clock: %.0f s\n", now_seconds() - t0);

    EXPECT_LT(aee_by_group["small"], aee_by_group["medium"]);
    EXPECT_LT(aee_by_group["medium"], aee_by_group["large"]);
    EXPECT_LT(aee_by_group["small"], ncc_small);
}

// ---------------------------------------------------------------------------
// 6. Distillation effect: lower held-out KL under identical seeds/steps, with
//    held-out AEE not worse by more than 5%.

TEST(Acceptance, C06_DistillationEffect) {
    CriterionReporter rep{6, "distillation effect"};
    const MatcherBundle& b = bundle();
    const double kl_with = matcher_heldout_kl(b.student_kl, b.teacher, b.heldout_train_dist,
                                              b.cfg.loss.temperature);
    const double kl_without = matcher_heldout_kl(b.student_nokl, b.teacher, b.heldout_train_dist,
                                                 b.cfg.loss.temperature);
    const double aee_with = matcher_aee(b.student_kl.matcher(1), b.heldout_train_dist);
    const double aee_without = matcher_aee(b.student_nokl.matcher(1), b.heldout_train_dist);
    std::printf("  held-out KL: with %.4f | without %.4f; AEE: with %.3f | without %.3f\n",
                kl_with, kl_without, aee_with, aee_without);
    EXPECT_LT(kl_with, kl_without);
    EXPECT_LE(aee_with, 1.05 * aee_without);
}

// ---------------------------------------------------------------------------
// 7. Overfit smoke, image SR: 8 pairs, reconstruction loss only, <= 5000
//    iterations, per-pair PSNR >= 35 dB.

TEST(Acceptance, C07_ImageSrOverfit) {
    CriterionReporter rep{7, "image SR overfit"};
    const double t0 = now_seconds();
    const MatcherBundle& b = bundle();

    HomographySampleConfig tf;
    tf.scale_min = 0.95;
    tf.scale_max = 1.05;
    tf.rotation_max_deg = 5.0;
    tf.jitter_frac = 0.02;
    auto pairs = synth_pairs(8, 48, tf, 7001);
    std::vector<SrSample> samples;
    for (const auto& p : pairs) samples.push_back({p.hr_input, p.hr_ref});

    SrNetConfig net;
    net.ch = 16;
    net.trunk_blocks = 4;
    net.transfer_blocks = {3, 2, 2};
    net.offset_mid = 16;
    Rng rng(701);
    RefImageSR model(net, rng);

    SrTrainConfig cfg;
    cfg.iters = 5000;
    cfg.rec_only = true;
    cfg.learning_rate = 5e-4;
    cfg.seed = 702;
    cfg.psnr_stop = 35.05;
    cfg.eval_every = 50;

    const ContrastiveMatcher matcher = b.student_kl.matcher(1);
    const auto result = train_sr(model, matcher, samples, cfg, {}, [](int s, double l) {
        if (s % 100 == 0) {
            std::printf("  sr overfit step %d loss %.5f\n", s, l);
            std::fflush(stdout);
        }
    });
    std::printf("  steps %d, min train-pair PSNR %.2f dB, %.0f s\n", result.steps_run,
                result.final_min_psnr, now_seconds() - t0);
    EXPECT_LE(result.steps_run, 5000);
    EXPECT_GE(result.final_min_psnr, 35.0);
}

// ---------------------------------------------------------------------------
// 8. Overfit smoke, video SR, plus reference-similarity monotonicity on a
//    held-out toy clip.

TEST(Acceptance, C08_VideoSrOverfitAndSimilarity) {
    CriterionReporter rep{8, "video SR overfit"};
    const double t0 = now_seconds();
    const MatcherBundle& b = bundle();
    const ContrastiveMatcher matcher = b.student_kl.matcher(1);

    std::vector<VsrSample> clips;
    for (int c = 0; c < 2; ++c) {
        VsrSample s;
        s.hr_frames = panning_clip(801 + static_cast<std::uint64_t>(c), 10, 128, 6);
        s.ref = s.hr_frames[0];
        clips.push_back(std::move(s));
    }

    VsrConfig net;
    net.ch = 10;
    net.feat_blocks = 2;
    net.prop_blocks = 2;
    net.fusion_blocks = 2;
    net.offset_mid = 10;
    Rng rng(803);
    RefVideoSR model(net, rng);

    VsrTrainConfig cfg;
    cfg.iters = 5000;
    cfg.batch_size = 1;
    cfg.patch = 128;  // whole 32x32 LR frames
    cfg.learning_rate = 1e-3;
    cfg.seed = 804;
    cfg.psnr_stop = 32.05;
    cfg.eval_every = 25;
    const auto result = train_vsr(model, matcher, clips, cfg, [](int s, double l) {
        if (s % 25 == 0) {
            std::printf("  vsr overfit step %d loss %.5f\n", s, l);
            std::fflush(stdout);
        }
    });
    std::printf("  steps %d, train min-clip PSNR %.2f dB, %.0f s\n", result.steps_run,
                result.final_psnr, now_seconds() - t0);
    EXPECT_LE(result.steps_run, 5000);
    EXPECT_GE(result.final_psnr, 32.0);

    // held-out toy clip; three references of decreasing similarity
    const int heldout_size = 128, pan = 6, frames = 10;
    const int big = heldout_size + pan * frames + 40;
    const Image src = render_texture(899, big, big, big / 64.0);
    VideoClip heldout;
    std::vector<Image> heldout_hr;
    for (int i = 0; i < frames; ++i) {
        heldout_hr.push_back(crop(src, i * pan, i * pan, heldout_size, heldout_size));
        heldout.frames.push_back(bicubic_downsample(heldout_hr.back(), 4));
    }
    const Image very_similar = heldout_hr[0];
    const Image similar = crop(src, 36, 36, heldout_size, heldout_size);  // offset view
    const Image irrelevant = render_texture(997, heldout_size, heldout_size, 2.0);

    auto clip_quality = [&](const Image& ref) {
        const VideoClip out = model.restore_clip(heldout, ref, matcher);
        double total = 0;
        for (size_t i = 1; i < out.frames.size(); ++i)  // first frame excluded
            total += psnr(out.frames[i], heldout_hr[i], MetricMode::Y);
        return total / (out.frames.size() - 1);
    };
    const double p_very = clip_quality(very_similar);
    const double p_sim = clip_quality(similar);
    const double p_irr = clip_quality(irrelevant);
    std::printf("  held-out PSNR: very %.3f | similar %.3f | irrelevant %.3f dB\n", p_very, p_sim,
                p_irr);
    EXPECT_GE(p_very, p_sim);
    EXPECT_GE(p_sim, p_irr - 0.05);
}

// ---------------------------------------------------------------------------
// 9. Metric conformance.

TEST(Acceptance, C09_MetricConformance) {
    CriterionReporter rep{9, "metric conformance"};
    // constant-offset PSNR closed form within 1e-9 dB
    for (int k : {1, 3, 5, 20}) {
        Image a({3, 6, 6}), c({3, 6, 6});
        for (std::int64_t i = 0; i < a.size(); ++i) {
            a[i] = 90.0 / 255.0;
            c[i] = (90.0 + k) / 255.0;
        }
        ASSERT_NEAR(psnr(a, c, MetricMode::Y), 20.0 * std::log10(255.0 / k), 1e-9);
        ASSERT_NEAR(psnr(a, c, MetricMode::RGB), 20.0 * std::log10(255.0 / k), 1e-9);
    }
    // ssim(a,a) = 1 exactly
    Rng rng(901);
    Image img({3, 16, 16});
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    ASSERT_DOUBLE_EQ(ssim(img, img, MetricMode::Y), 1.0);
    // aee analytic cases exact
    GtField gt;
    gt.h = 1;
    gt.w = 4;
    gt.target = {{1, 1}, {2, 2}, {3, 3}, {4, 4}};
    gt.valid = {1, 1, 1, 1};
    CorrespondenceField pred;
    pred.h = 1;
    pred.w = 4;
    pred.target = gt.target;
    pred.score.assign(4, 1.0);
    ASSERT_EQ(aee(pred, gt), 0.0);
    for (auto& t : pred.target) t.y += 1.0;
    ASSERT_EQ(aee(pred, gt), 1.0);

    // evaluate() byte-determinism modulo the volatile fields
    const std::string dir = testing::TempDir() + "/acc9";
    fs::remove_all(dir);
    fs::create_directories(dir);
    DatasetManifest manifest;
    for (int i = 0; i < 2; ++i) {
        const std::string p = dir + "/hr" + std::to_string(i) + ".png";
        write_png(p, render_texture(static_cast<std::uint64_t>(910 + i), 48, 48));
        ManifestRecord rec;
        rec.input = p;
        manifest.records.push_back(rec);
    }
    BicubicEvalModel model;
    EvalOptions opt;
    opt.config_fingerprint = "c9";
    const EvalReport r1 = evaluate(model, manifest, opt);
    const EvalReport r2 = evaluate(model, manifest, opt);
    ASSERT_EQ(r1.normalized_json().dump(), r2.normalized_json().dump());
}

// ---------------------------------------------------------------------------
// 10. End-to-end CLI determinism: the full pipeline, run twice with the same
//     seed, produces identical content hashes for every artifact.

namespace {

int run_cli(const std::string& workdir, const std::string& args) {
    const std::string cmd = "cd " + workdir + " && " + REFSR_CLI_PATH + " " + args + " >> cli.log 2>&1";
    return std::system(cmd.c_str());
}

// relpath -> sha256 of every regular file; the eval report is volatile
// (timestamp/wall-clock) and is checked through its normalized hash instead.
std::map<std::string, std::string> hash_tree(const std::string& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), root).string();
        if (rel == "cli.log" || rel == "report.json") continue;
        out[rel] = Sha256::of_file(e.path().string());
    }
    return out;
}

}  // namespace

TEST(Acceptance, C10_EndToEndDeterminism) {
    CriterionReporter rep{10, "end-to-end determinism"};
    const std::string base = testing::TempDir() + "/acc10";
    fs::remove_all(base);

    auto run_pipeline = [&](const std::string& name) {
        const std::string dir = base + "/" + name;
        fs::create_directories(dir);
        const std::string small =
            " --set encoder.channels=6,8,10 --set encoder.descriptor_dim=10"
            " --set loss.batch_size=2 --set train.steps=6";
        ASSERT_EQ(run_cli(dir, "make-pairs --procedural 4 --count 8 --crop 48 --seed 42 --out data"), 0);
        ASSERT_EQ(run_cli(dir, "train-teacher --data data/pairs.jsonl --seed 42 --out teacher" + small), 0);
        ASSERT_EQ(run_cli(dir,
                          "train-student --data data/pairs.jsonl --teacher teacher/teacher.ckpt "
                          "--seed 42 --out student" + small),
                  0);
        ASSERT_EQ(run_cli(dir,
                          "train-sr --data data/pairs.jsonl --matcher student/student.ckpt --seed 42"
                          " --out sr --set sr.channels=8 --set sr.trunk_blocks=1"
                          " --set sr.transfer_blocks=1,1,1 --set sr.offset_mid=8"
                          " --set train.iters=6 --set train.rec_only=true"),
                  0);
        ASSERT_EQ(run_cli(dir,
                          "infer-sr --lr lr.png --ref data/pairs/pair0_ref.png "
                          "--weights sr/sr.ckpt --out sr_out.png"),
                  0);
        ASSERT_EQ(run_cli(dir, "make-benchmark --procedural 2 --size 64 --group small --seed 42 "
                               "--out bench"),
                  0);
        ASSERT_EQ(run_cli(dir,
                          "eval --weights sr/sr.ckpt --manifest bench/benchmark_small.jsonl "
                          "--mode image --channel Y --report report.json --plots plots "
                          "--seed 42 --out evalrun"),
                  0);
    };

    // a small LR input for infer-sr, identical in both runs
    for (const char* name : {"run1", "run2"}) {
        const std::string dir = base + "/" + std::string(name);
        fs::create_directories(dir);
        write_png(dir + "/lr.png", bicubic_downsample(render_texture(1001, 48, 48), 4));
    }
    run_pipeline("run1");
    if (testing::Test::HasFailure()) return;
    run_pipeline("run2");
    if (testing::Test::HasFailure()) return;

    const auto h1 = hash_tree(base + "/run1");
    const auto h2 = hash_tree(base + "/run2");
    ASSERT_FALSE(h1.empty());
    ASSERT_EQ(h1.size(), h2.size());
    for (const auto& [rel, hash] : h1) {
        auto it = h2.find(rel);
        ASSERT_NE(it, h2.end()) << rel;
        EXPECT_EQ(hash, it->second) << rel;
    }
    // the eval report's content hash (volatile fields stripped) is recorded in
    // the run manifest and must also agree
    const auto m1 = nlohmann::json::parse(read_file(base + "/run1/evalrun/run_manifest.json"));
    const auto m2 = nlohmann::json::parse(read_file(base + "/run2/evalrun/run_manifest.json"));
    EXPECT_EQ(m1.at("outputs").at("report.json"), m2.at("outputs").at("report.json"));
    // sanity: the pipeline actually produced a model and a report
    EXPECT_TRUE(fs::exists(base + "/run1/sr_out.png"));
    EXPECT_TRUE(fs::exists(base + "/run1/report.json"));
}
