#include <gtest/gtest.h>

#include "refsr/agg/deform.hpp"

using namespace refsr;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

}  // namespace

TEST(BilinearSample, IntegerInteriorIsExact) {
    Rng rng(1);
    const Tensor feat = random_tensor({3, 4, 5}, rng);
    const auto v = bilinear_sample(feat, 2.0, 1.0);
    for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(v[static_cast<size_t>(c)], feat.at(c, 1, 2));
}

TEST(BilinearSample, FullyOutOfBoundsIsZero) {
    Rng rng(2);
    const Tensor feat = random_tensor({2, 3, 3}, rng);
    for (const auto& v : bilinear_sample(feat, -10.0, -10.0)) EXPECT_EQ(v, 0.0);
    for (const auto& v : bilinear_sample(feat, 100.0, 1.0)) EXPECT_EQ(v, 0.0);
}

TEST(BilinearSample, ExplicitFourTermExpansion) {
    Tensor feat({1, 2, 2});
    feat.at(0, 0, 0) = 1.0;
    feat.at(0, 0, 1) = 2.0;
    feat.at(0, 1, 0) = 3.0;
    feat.at(0, 1, 1) = 4.0;
    // coord (x, y) = (0.25, 0.75): weights (1-fy)(1-fx)=0.75*0.25 on x00 etc.
    const auto v = bilinear_sample(feat, 0.25, 0.75);
    const double expect = 0.25 * 0.75 * 1.0 + 0.25 * 0.25 * 2.0 + 0.75 * 0.75 * 3.0 +
                          0.75 * 0.25 * 4.0;
    EXPECT_NEAR(v[0], expect, 1e-15);
}

TEST(OffsetHead, ZeroInitGivesZeroOffsetsAndHalfModulation) {
    Rng rng(3);
    OffsetHead head(4, 6, 9, rng, 8.0);
    const Tensor feat = random_tensor({4, 5, 6}, rng);
    const Tensor gathered = random_tensor({4, 5, 6}, rng);
    ad::NoGradGuard ng;
    const OffsetField f = head(ad::Var(feat), ad::Var(gathered));
    EXPECT_EQ(f.offsets.val().shape(), (std::vector<int>{18, 5, 6}));
    EXPECT_EQ(f.modulations.val().shape(), (std::vector<int>{9, 5, 6}));
    for (int k = 0; k < 9; ++k)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 6; ++x) {
                const Vec2 o = f.offset_at(k, y, x);
                EXPECT_EQ(o.x, 0.0);
                EXPECT_EQ(o.y, 0.0);
                EXPECT_DOUBLE_EQ(f.modulation_at(k, y, x), 0.5);
            }
    EXPECT_THROW(head(ad::Var(feat), ad::Var(random_tensor({4, 5, 5}, rng))), contract_error);
}

TEST(OffsetHead, OffsetsNeverExceedClampBound) {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        OffsetHead head(3, 5, 9, rng, 8.0);
        // blow up the final conv weights so raw predictions exceed the bound
        Tensor& w = head.c2.w.mutable_val();
        for (std::int64_t i = 0; i < w.size(); ++i) w[i] = 30.0 * rng.normal();
        Tensor& b = head.c2.b.mutable_val();
        for (std::int64_t i = 0; i < b.size(); ++i) b[i] = 10.0 * rng.normal();
        const Tensor feat = random_tensor({3, 4, 4}, rng, 2.0);
        const Tensor gathered = random_tensor({3, 4, 4}, rng, 2.0);
        ad::NoGradGuard ng;
        const OffsetField f = head(ad::Var(feat), ad::Var(gathered));
        EXPECT_LE(f.offsets.val().abs_max(), 8.0);
        EXPECT_GE(f.modulations.val().min_all(), 0.0);
        EXPECT_LE(f.modulations.val().max_all(), 1.0);
    }
}

namespace {

struct AggSetup {
    Tensor ref, p0, off, mod, kern;
    std::vector<std::pair<int, int>> taps = square_taps(3);
    int cin = 2, cout = 3, h = 3, w = 3;

    explicit AggSetup(Rng& rng, bool off_kink = false) {
        ref = random_tensor({cin, 8, 8}, rng);
        p0 = Tensor({2, h, w});
        off = Tensor({18, h, w});
        mod = Tensor({9, h, w});
        kern = random_tensor({cout, cin, 9}, rng, 0.5);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                p0.at(0, y, x) = 1.0 + (off_kink ? rng.uniform(0.3, 0.7) : 1.0);
                p0.at(1, y, x) = 1.0 + (off_kink ? rng.uniform(0.3, 0.7) : 1.0);
                for (int k = 0; k < 9; ++k) {
                    if (off_kink) {
                        off.at(2 * k, y, x) = rng.uniform(-0.1, 0.1);
                        off.at(2 * k + 1, y, x) = rng.uniform(-0.1, 0.1);
                    }
                    mod.at(k, y, x) = rng.uniform(0.2, 0.9);
                }
            }
    }
};

double agg_value(const AggSetup& s, const Tensor& ref, const Tensor& off, const Tensor& mod,
                 const Tensor& kern) {
    ad::NoGradGuard ng;
    ad::Var y = deform_aggregate(ad::Var(ref), s.p0, ad::Var(off), ad::Var(mod), ad::Var(kern),
                                 s.taps);
    return ad::sum_all(ad::square(y)).val().item();
}

}  // namespace

TEST(DeformAggregate, PureGatherWithIdentityCenterTap) {
    Rng rng(5);
    const Tensor ref = random_tensor({2, 8, 8}, rng);
    const int h = 3, w = 3;
    Tensor p0({2, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            p0.at(0, y, x) = 2.0;  // integer displacement
            p0.at(1, y, x) = 3.0;
        }
    Tensor off({18, h, w});
    Tensor mod = Tensor::full({9, h, w}, 1.0);
    // kernel = identity on the center tap (k = 4)
    Tensor kern({2, 2, 9});
    kern.at(0, 0, 4) = 1.0;
    kern.at(1, 1, 4) = 1.0;
    ad::NoGradGuard ng;
    const Tensor y = deform_aggregate(ad::Var(ref), p0, ad::Var(off), ad::Var(mod), ad::Var(kern),
                                      square_taps(3))
                         .val();
    for (int c = 0; c < 2; ++c)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
                EXPECT_DOUBLE_EQ(y.at(c, yy, xx), ref.at(c, yy + 3, xx + 2));
}

TEST(DeformAggregate, ZeroModulationAnnihilates) {
    Rng rng(6);
    AggSetup s(rng, true);
    const Tensor zero_mod({9, s.h, s.w});
    ad::NoGradGuard ng;
    const Tensor y = deform_aggregate(ad::Var(s.ref), s.p0, ad::Var(s.off), ad::Var(zero_mod),
                                      ad::Var(s.kern), s.taps)
                         .val();
    for (std::int64_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 0.0);
}

TEST(DeformAggregate, FractionalOffsetMatchesBilinearOracle) {
    // single tap, single channel, one output position on a 2x2 gradient
    Tensor ref({1, 2, 2});
    ref.at(0, 0, 0) = 0.0;
    ref.at(0, 0, 1) = 1.0;
    ref.at(0, 1, 0) = 2.0;
    ref.at(0, 1, 1) = 3.0;
    Tensor p0({2, 1, 1});
    Tensor off({2, 1, 1});
    off.at(0, 0, 0) = 0.5;
    off.at(1, 0, 0) = 0.5;
    Tensor mod = Tensor::full({1, 1, 1}, 1.0);
    Tensor kern = Tensor::full({1, 1, 1}, 1.0);
    std::vector<std::pair<int, int>> taps = {{0, 0}};
    ad::NoGradGuard ng;
    const Tensor y =
        deform_aggregate(ad::Var(ref), p0, ad::Var(off), ad::Var(mod), ad::Var(kern), taps).val();
    // sample at (0.5, 0.5): mean of the four corners
    EXPECT_NEAR(y.at(0, 0, 0), 1.5, 1e-6);
}

TEST(DeformAggregate, LinearInReferenceFeatures) {
    Rng rng(7);
    AggSetup s(rng, true);
    const Tensor x = random_tensor({s.cin, 8, 8}, rng);
    const Tensor z = random_tensor({s.cin, 8, 8}, rng);
    const double a = 0.7, b = -1.3;
    ad::NoGradGuard ng;
    auto run = [&](const Tensor& r) {
        return deform_aggregate(ad::Var(r), s.p0, ad::Var(s.off), ad::Var(s.mod), ad::Var(s.kern),
                                s.taps)
            .val();
    };
    Tensor mixed({s.cin, 8, 8});
    for (std::int64_t i = 0; i < mixed.size(); ++i) mixed[i] = a * x[i] + b * z[i];
    const Tensor lhs = run(mixed);
    const Tensor yx = run(x);
    const Tensor yz = run(z);
    for (std::int64_t i = 0; i < lhs.size(); ++i)
        EXPECT_NEAR(lhs[i], a * yx[i] + b * yz[i], 1e-6);
}

TEST(DeformAggregate, EquivalentToConvolutionAtRest) {
    // dp = 0, dm = 1, p0 = 0: equals a standard 3x3 zero-padded convolution
    Rng rng(8);
    const int cin = 2, cout = 3;
    const Tensor ref = random_tensor({cin, 6, 7}, rng);
    const Tensor kern = random_tensor({cout, cin, 9}, rng);
    Tensor p0({2, 6, 7});
    Tensor off({18, 6, 7});
    Tensor mod = Tensor::full({9, 6, 7}, 1.0);
    ad::NoGradGuard ng;
    const Tensor y = deform_aggregate(ad::Var(ref), p0, ad::Var(off), ad::Var(mod), ad::Var(kern),
                                      square_taps(3))
                         .val();
    // direct conv oracle: w4[co][ci][ky][kx] = kern[co][ci][(ky)*3+kx]
    Tensor w4({cout, cin, 3, 3});
    for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
            for (int k = 0; k < 9; ++k) w4.at(co, ci, k / 3, k % 3) = kern.at(co, ci, k);
    const Tensor conv = nn::raw::conv2d(ref, w4, 1, 1);
    EXPECT_TRUE(conv.same_shape(y));
    for (std::int64_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], conv[i], 1e-6);
}

TEST(DeformAggregate, GradientsMatchFiniteDifferences) {
    Rng rng(9);
    for (int trial = 0; trial < 3; ++trial) {
        AggSetup s(rng, true);
        ad::Var refv(s.ref, true), offv(s.off, true), modv(s.mod, true), kernv(s.kern, true);
        ad::Var y = deform_aggregate(refv, s.p0, offv, modv, kernv, s.taps);
        ad::Var loss = ad::sum_all(ad::square(y));
        auto grads = ad::backward_collect(loss);
        const double h = 1e-6;

        auto check = [&](const Tensor& x0, const Tensor& analytic, int which, std::int64_t step) {
            for (std::int64_t i = 0; i < x0.size(); i += step) {
                Tensor p = x0, m = x0;
                p[i] += h;
                m[i] -= h;
                double fp, fm;
                switch (which) {
                    case 0: fp = agg_value(s, p, s.off, s.mod, s.kern);
                            fm = agg_value(s, m, s.off, s.mod, s.kern); break;
                    case 1: fp = agg_value(s, s.ref, p, s.mod, s.kern);
                            fm = agg_value(s, s.ref, m, s.mod, s.kern); break;
                    case 2: fp = agg_value(s, s.ref, s.off, p, s.kern);
                            fm = agg_value(s, s.ref, s.off, m, s.kern); break;
                    default: fp = agg_value(s, s.ref, s.off, s.mod, p);
                             fm = agg_value(s, s.ref, s.off, s.mod, m); break;
                }
                const double fd = (fp - fm) / (2 * h);
                const double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-6});
                EXPECT_LT(std::fabs(fd - analytic[i]) / denom, 1e-3)
                    << "input " << which << " index " << i;
            }
        };
        check(s.ref, grads.at(refv.node().get()).val(), 0, 7);
        check(s.off, grads.at(offv.node().get()).val(), 1, 3);
        check(s.mod, grads.at(modv.node().get()).val(), 2, 2);
        check(s.kern, grads.at(kernv.node().get()).val(), 3, 5);
    }
}

TEST(DeformAggregate, ShapeContracts) {
    Rng rng(10);
    AggSetup s(rng);
    ad::NoGradGuard ng;
    Tensor bad_off({17, s.h, s.w});
    EXPECT_THROW(deform_aggregate(ad::Var(s.ref), s.p0, ad::Var(bad_off), ad::Var(s.mod),
                                  ad::Var(s.kern), s.taps),
                 contract_error);
    Tensor bad_kern({3, 1, 9});
    EXPECT_THROW(deform_aggregate(ad::Var(s.ref), s.p0, ad::Var(s.off), ad::Var(s.mod),
                                  ad::Var(bad_kern), s.taps),
                 contract_error);
}
