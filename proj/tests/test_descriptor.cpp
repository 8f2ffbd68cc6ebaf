#include <gtest/gtest.h>

#include "refsr/data/synth.hpp"
#include "refsr/match/descriptor.hpp"

using namespace refsr;

namespace {

EncoderConfig small_cfg() {
    EncoderConfig cfg;
    cfg.channels = {6, 8, 10};
    cfg.descriptor_dim = 12;
    return cfg;
}

}  // namespace

TEST(Encoder, GridShapesFollowStride) {
    Rng rng(1);
    DescriptorEncoder enc(small_cfg(), rng);
    // 40x40 -> 10x10; 160x160 -> 40x40 (the training crop sizes)
    const DescriptorGrid g1 = extract_descriptors(render_texture(3, 40, 40), enc);
    EXPECT_EQ(g1.h, 10);
    EXPECT_EQ(g1.w, 10);
    EXPECT_EQ(g1.dim, 12);
    EXPECT_EQ(g1.stride, 4);
    const DescriptorGrid g2 = extract_descriptors(render_texture(4, 160, 160), enc);
    EXPECT_EQ(g2.h, 40);
    EXPECT_EQ(g2.w, 40);
    // non-multiple sizes pad up: ceil semantics
    const DescriptorGrid g3 = extract_descriptors(render_texture(5, 41, 46), enc);
    EXPECT_EQ(g3.h, 11);
    EXPECT_EQ(g3.w, 12);
    EXPECT_TRUE(g3.data.all_finite());
}

TEST(Encoder, DeterministicGivenWeightsAndImage) {
    Rng rng(2);
    DescriptorEncoder enc(small_cfg(), rng);
    const Image img = render_texture(9, 36, 28);
    const DescriptorGrid a = extract_descriptors(img, enc);
    const DescriptorGrid b = extract_descriptors(img, enc);
    EXPECT_TRUE(a.data.equals(b.data));
}

TEST(Encoder, GrayscaleInputRejected) {
    Rng rng(3);
    DescriptorEncoder enc(small_cfg(), rng);
    Image gray({1, 16, 16});
    EXPECT_THROW(extract_descriptors(gray, enc), config_error);
}

TEST(Encoder, ArchitectureIdRoundTrip) {
    Rng rng(4);
    DescriptorEncoder enc(small_cfg(), rng);
    Checkpoint ck;
    ck.kind = "encoder";
    ck.architecture_id = enc.cfg.architecture_id();
    encoder_to_checkpoint(enc, "enc", ck);
    const std::string path = testing::TempDir() + "/enc.ckpt";
    save_checkpoint(ck, path);
    const Checkpoint back = load_checkpoint(path);
    EXPECT_EQ(back.architecture_id, "cenc-v1/s4/c6.8.10/d12");

    DescriptorEncoder enc2(small_cfg(), rng);  // different init
    encoder_from_checkpoint(enc2, "enc", back);
    // float32 storage: values agree to float precision and are identical
    // between two loads
    DescriptorEncoder enc3(small_cfg(), rng);
    encoder_from_checkpoint(enc3, "enc", back);
    const Image img = render_texture(10, 24, 24);
    EXPECT_TRUE(extract_descriptors(img, enc2).data.equals(extract_descriptors(img, enc3).data));
}

TEST(Patchify, RadiusZeroIsIdentity) {
    Rng rng(5);
    DescriptorGrid g;
    g.h = 3;
    g.w = 4;
    g.dim = 5;
    g.data = Tensor({12, 5});
    for (std::int64_t i = 0; i < g.data.size(); ++i) g.data[i] = rng.normal();
    const DescriptorGrid out = patchify(g, 0);
    EXPECT_TRUE(out.data.equals(g.data));
    EXPECT_THROW(patchify(g, -1), domain_error);
}

TEST(Patchify, InteriorCenterBlockEqualsOriginal) {
    Rng rng(6);
    DescriptorGrid g;
    g.h = 4;
    g.w = 4;
    g.dim = 3;
    g.data = Tensor({16, 3});
    for (std::int64_t i = 0; i < g.data.size(); ++i) g.data[i] = rng.normal();
    const DescriptorGrid out = patchify(g, 1);
    EXPECT_EQ(out.dim, 27);
    // interior cell (1,2): center block is t = 4 (of 9)
    const double* row = out.data.data() + static_cast<size_t>(out.index(1, 2)) * out.dim;
    const double* src = g.row(1, 2);
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(row[4 * 3 + j], src[j]);
}

TEST(Patchify, CornerCellZeroBlocksMatchHandOracle) {
    Rng rng(7);
    DescriptorGrid g;
    g.h = 3;
    g.w = 3;
    g.dim = 2;
    g.data = Tensor({9, 2});
    for (std::int64_t i = 0; i < g.data.size(); ++i) g.data[i] = 1.0 + rng.uniform();
    const DescriptorGrid out = patchify(g, 1);
    // corner (0,0): neighbors (dy,dx) with dy<0 or dx<0 are zero-padded ->
    // blocks t in {0,1,2,3,6} are zero, {4,5,7,8} carry data
    const double* row = out.data.data();
    int zero_blocks = 0;
    for (int t = 0; t < 9; ++t) {
        bool all_zero = true;
        for (int j = 0; j < 2; ++j)
            if (row[t * 2 + j] != 0.0) all_zero = false;
        if (all_zero) ++zero_blocks;
        const int dy = t / 3 - 1, dx = t % 3 - 1;
        const bool expect_zero = dy < 0 || dx < 0;
        EXPECT_EQ(all_zero, expect_zero) << "block " << t;
    }
    EXPECT_EQ(zero_blocks, 5);
}
