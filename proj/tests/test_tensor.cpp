#include <gtest/gtest.h>

#include <random>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "texreform/tensor.hpp"

using namespace texreform;
using fixtures::max_rel_error;
using fixtures::random_feature;
using fixtures::random_kernel;

TEST(Conv2d, MatchesNaiveLoops) {
    std::mt19937 rng(1);
    std::uniform_int_distribution<int> dim(1, 9), ch(1, 5), ks(1, 3), st(1, 2), pad(0, 2);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t k = ks(rng);
        const std::size_t h = k + dim(rng), w = k + dim(rng);
        const auto x = random_feature(ch(rng), h, w, rng);
        const auto kern = random_kernel(ch(rng), x.channels(), k, k, rng, trial % 2 == 0);
        const std::size_t stride = st(rng);
        const int mode = trial % 3;
        const std::size_t p = mode == 0 ? 0 : std::min<std::size_t>(pad(rng), std::min(h, w) - 1);
        const Padding padding = mode == 0 ? Padding::none() : mode == 1 ? Padding::zeros(p) : Padding::reflect(p);
        const auto got = conv2d(x, kern, stride, padding);
        const auto want = oracle::conv2d(x, kern, stride, mode, p);
        ASSERT_EQ(got.shape(), want.shape()) << "trial " << trial;
        EXPECT_LE(max_rel_error(got, want), 1e-5) << "trial " << trial;
    }
}

TEST(Conv2d, ReflectPaddingOfSinglePixelReplicates) {
    FeatureMap x(1, 1, 1, 2.0f);
    Kernel4D k(1, 1, 3, 3, 1.0f);
    EXPECT_FLOAT_EQ(conv2d(x, k, 1, Padding::reflect(1))(0, 0, 0), 18.0f);
}

TEST(Conv2d, RejectsChannelMismatch) {
    FeatureMap x(2, 4, 4);
    Kernel4D k(1, 3, 3, 3);
    EXPECT_THROW(conv2d(x, k), DimensionMismatch);
}

TEST(Conv2d, RejectsKernelLargerThanInput) {
    FeatureMap x(1, 2, 2);
    Kernel4D k(1, 1, 3, 3);
    EXPECT_THROW(conv2d(x, k), DimensionMismatch);
}

TEST(ConvTranspose2d, MatchesScatterOracle) {
    std::mt19937 rng(2);
    std::uniform_int_distribution<int> dim(1, 7), ch(1, 5), ks(1, 4), st(1, 3);
    for (int trial = 0; trial < 60; ++trial) {
        const auto x = random_feature(ch(rng), dim(rng), dim(rng), rng);
        const std::size_t k = ks(rng);
        const auto kern = random_kernel(x.channels(), ch(rng), k, k, rng, false);
        const std::size_t stride = st(rng);
        const auto got = conv_transpose2d(x, kern, stride);
        const auto want = oracle::conv_transpose2d(x, kern, stride);
        ASSERT_EQ(got.shape(), want.shape());
        EXPECT_LE(max_rel_error(got, want), 1e-5) << "trial " << trial;
    }
}

TEST(ConvTranspose2d, IsAdjointOfConv) {
    // <conv(x), y> == <x, conv_t(y)> for unpadded convolution.
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> dim(0, 6), ch(1, 4), ks(1, 3), st(1, 2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = ks(rng), stride = st(rng);
        // Choose dims so the strided windows tile the input exactly.
        const std::size_t oh = 1 + dim(rng), ow = 1 + dim(rng);
        const auto x = random_feature(ch(rng), (oh - 1) * stride + k, (ow - 1) * stride + k, rng);
        const auto kern = random_kernel(ch(rng), x.channels(), k, k, rng, false);
        const auto y = random_feature(kern.out_channels, oh, ow, rng);
        const auto cx = conv2d(x, kern, stride);
        const auto ty = conv_transpose2d(y, kern, stride);
        ASSERT_EQ(ty.shape(), x.shape());
        double lhs = 0, rhs = 0, scale = 0;
        for (std::size_t i = 0; i < cx.size(); ++i) lhs += static_cast<double>(cx.values()[i]) * y.values()[i];
        for (std::size_t i = 0; i < x.size(); ++i) {
            rhs += static_cast<double>(x.values()[i]) * ty.values()[i];
            scale += std::abs(static_cast<double>(x.values()[i]) * ty.values()[i]);
        }
        EXPECT_LE(std::abs(lhs - rhs) / std::max(1.0, scale), 1e-4) << "trial " << trial;
    }
}

TEST(MaxPool2d, MatchesNaiveLoops) {
    std::mt19937 rng(4);
    std::uniform_int_distribution<int> dim(2, 11), ch(1, 4);
    for (int trial = 0; trial < 50; ++trial) {
        const auto x = random_feature(ch(rng), dim(rng), dim(rng), rng);
        const auto got = max_pool2d(x);
        const auto want = oracle::max_pool2d(x, 2, 2);
        ASSERT_EQ(got, want) << "trial " << trial;
    }
}

TEST(MaxPool2d, FloorsOddDims) {
    FeatureMap x(1, 5, 7);
    EXPECT_EQ(max_pool2d(x).shape(), (Shape3{1, 2, 3}));
    EXPECT_THROW(max_pool2d(FeatureMap(1, 1, 4)), DimensionMismatch);
}

TEST(ChannelStats, MatchesTwoPassOracle) {
    std::mt19937 rng(5);
    std::uniform_int_distribution<int> dim(1, 20), ch(1, 6);
    std::uniform_real_distribution<float> off(-100.0f, 100.0f);
    for (int trial = 0; trial < 50; ++trial) {
        const float o = off(rng);
        const auto x = random_feature(ch(rng), dim(rng), dim(rng), rng, o - 1.0f, o + 3.0f);
        const auto got = channel_stats(x);
        const auto want = oracle::channel_stats(x);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t c = 0; c < got.size(); ++c) {
            EXPECT_LE(std::abs(got[c].mean - want[c].mean), 1e-5 * std::max(1.0, std::abs(want[c].mean)));
            EXPECT_LE(std::abs(got[c].stddev - want[c].stddev), 1e-5 * std::max(1.0, want[c].stddev));
        }
    }
}

TEST(ChannelStats, ConstantChannelHasZeroStd) {
    const auto s = channel_stats(FeatureMap(2, 3, 3, 4.5f));
    EXPECT_DOUBLE_EQ(s[1].mean, 4.5);
    EXPECT_DOUBLE_EQ(s[1].stddev, 0.0);
}

TEST(Resample, UpsampleNearestRepeatsPixels) {
    FeatureMap x(1, 2, 2, std::vector<float>{1, 2, 3, 4});
    const auto y = upsample_nearest(x, 2);
    EXPECT_EQ(y.shape(), (Shape3{1, 4, 4}));
    EXPECT_EQ(y(0, 1, 1), 1.0f);
    EXPECT_EQ(y(0, 3, 2), 4.0f);
    EXPECT_EQ(max_pool2d(y), x);
}

TEST(Resample, NearestUsesFloorIndex) {
    FeatureMap x(1, 1, 4, std::vector<float>{1, 2, 3, 4});
    const auto y = resample_nearest(x, 1, 2);
    EXPECT_EQ(y.values(), (std::vector<float>{1, 3}));
}

TEST(FeatureMap, ConstructorValidatesLength) {
    EXPECT_THROW(FeatureMap(1, 2, 2, std::vector<float>{1, 2, 3}), DimensionMismatch);
}

TEST(FeatureMap, ConcatCropLerp) {
    FeatureMap a(1, 2, 2, 1.0f), b(2, 2, 2, 3.0f);
    const auto c = concat_channels(a, b);
    EXPECT_EQ(c.shape(), (Shape3{3, 2, 2}));
    EXPECT_EQ(c(2, 1, 1), 3.0f);
    EXPECT_THROW(concat_channels(a, FeatureMap(1, 3, 2)), DimensionMismatch);
    EXPECT_EQ(crop(c, 1, 0, 1, 2).shape(), (Shape3{3, 1, 2}));
    EXPECT_THROW(crop(c, 1, 1, 2, 2), DimensionMismatch);
    const auto l = lerp(a, FeatureMap(1, 2, 2, 5.0f), 0.25f, 0.75f);
    EXPECT_FLOAT_EQ(l(0, 0, 0), 4.0f);
    FeatureMap bad(1, 1, 1, std::numeric_limits<float>::quiet_NaN());
    EXPECT_FALSE(all_finite(bad));
    EXPECT_TRUE(all_finite(a));
}
