#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "texreform/vstr.hpp"

using namespace texreform;
using fixtures::random_feature;

TEST(Standardize, ZeroMeanUnitStd) {
    std::mt19937 rng(21);
    const auto x = random_feature(4, 6, 5, rng, 3.0f, 9.0f);
    const auto s = standardize(x);
    for (const auto& st : oracle::channel_stats(s)) {
        EXPECT_NEAR(st.mean, 0.0, 1e-6);
        EXPECT_NEAR(st.stddev, 1.0, 1e-5);
    }
}

TEST(Standardize, ConstantChannelBecomesZero) {
    const auto s = standardize(FeatureMap(1, 3, 3, 7.0f));
    for (float v : s.values()) EXPECT_EQ(v, 0.0f);
}

TEST(FuseSemantics, ConcatScalesSemanticChannels) {
    FeatureMap f(2, 2, 2, 1.0f), sem(3, 2, 2, 2.0f);
    const auto out = fuse_semantics(f, sem, {FusionVariant::concat, 50.0});
    EXPECT_EQ(out.shape(), (Shape3{5, 2, 2}));
    EXPECT_EQ(out(0, 1, 1), 1.0f);
    EXPECT_EQ(out(4, 1, 1), 100.0f);
}

TEST(FuseSemantics, AddNeedsEqualChannels) {
    FeatureMap f(2, 2, 2, 1.0f), sem(2, 2, 2, 2.0f);
    const auto out = fuse_semantics(f, sem, {FusionVariant::add, 0.5});
    EXPECT_EQ(out.shape(), f.shape());
    EXPECT_EQ(out(1, 0, 0), 2.0f);
    EXPECT_THROW(fuse_semantics(f, FeatureMap(3, 2, 2), {FusionVariant::add, 1.0}), DimensionMismatch);
}

TEST(FuseSemantics, DownsampleResamplesRgb) {
    FeatureMap f(2, 2, 2, 0.0f);
    FeatureMap rgb(3, 4, 4);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) rgb(0, r, c) = static_cast<float>(r * 4 + c);
    const auto out = fuse_semantics(f, rgb, {FusionVariant::downsample, 1.0});
    EXPECT_EQ(out.shape(), (Shape3{5, 2, 2}));
    EXPECT_EQ(out(2, 0, 0), 0.0f);
    EXPECT_EQ(out(2, 1, 1), 10.0f);
    EXPECT_THROW(fuse_semantics(f, FeatureMap(4, 4, 4), {FusionVariant::downsample, 1.0}), DimensionMismatch);
}

TEST(FuseSemantics, RejectsBadOmegaAndMisalignment) {
    FeatureMap f(2, 2, 2), sem(2, 3, 2);
    EXPECT_THROW(fuse_semantics(f, FeatureMap(2, 2, 2), {FusionVariant::concat, -1.0}), InvalidArgument);
    EXPECT_THROW(fuse_semantics(f, sem, {FusionVariant::concat, 1.0}), DimensionMismatch);
}

TEST(GlobalPatchSize, MinusOneOfSmallestDim) {
    EXPECT_EQ(global_patch_size(32, 32, 32, 32), 31u);
    EXPECT_EQ(global_patch_size(16, 20, 12, 40), 11u);
    EXPECT_EQ(global_patch_size(5, 9, 7, 2), 1u);
    EXPECT_EQ(global_patch_size(FeatureMap(1, 8, 6), FeatureMap(1, 9, 9)), 5u);
    EXPECT_THROW(global_patch_size(1, 8, 8, 8), DegenerateFeature);
}

TEST(ExtractPatches, CountAndContent) {
    std::mt19937 rng(22);
    const auto x = random_feature(3, 7, 9, rng);
    for (std::size_t p : {1, 2, 3}) {
        for (std::size_t s : {1, 2, 3}) {
            const auto bank = extract_patches(x, p, s);
            EXPECT_EQ(bank.rows, (7 - p) / s + 1);
            EXPECT_EQ(bank.cols, (9 - p) / s + 1);
            EXPECT_EQ(bank.count(), bank.rows * bank.cols);
            for (std::size_t i = 0; i < bank.count(); ++i) {
                const std::size_t r0 = (i / bank.cols) * s, c0 = (i % bank.cols) * s;
                for (std::size_t c = 0; c < 3; ++c)
                    for (std::size_t u = 0; u < p; ++u)
                        for (std::size_t v = 0; v < p; ++v)
                            ASSERT_EQ(bank.patches.at(i, c, u, v), x(c, r0 + u, c0 + v));
            }
        }
    }
    EXPECT_THROW(extract_patches(x, 8, 1), DimensionMismatch);
    EXPECT_THROW(extract_patches(x, 0, 1), InvalidArgument);
}

TEST(SgtwMatch, EqualsBruteForceCosineArgmax) {
    std::mt19937 rng(23);
    std::uniform_int_distribution<int> dim(3, 8), ch(1, 8), pd(1, 3), st(1, 2);
    for (int trial = 0; trial < 150; ++trial) {
        const std::size_t p = pd(rng);
        const std::size_t s = trial < 100 ? 1 : st(rng);
        const std::size_t c = ch(rng);
        const auto src = random_feature(c, std::max<std::size_t>(p, dim(rng)), std::max<std::size_t>(p, dim(rng)), rng);
        const auto tgt = random_feature(c, std::max<std::size_t>(p, dim(rng)), std::max<std::size_t>(p, dim(rng)), rng);
        const auto got = sgtw_match(extract_patches(src, p, s), tgt);
        EXPECT_EQ(got.index, oracle::cosine_argmax(src, tgt, p, s)) << "trial " << trial;
    }
}

TEST(SgtwMatch, TiesGoToLowestIndex) {
    // Two identical source patches: the earlier one must win.
    FeatureMap src(1, 1, 4, std::vector<float>{1, 2, 1, 2});
    FeatureMap tgt(1, 1, 2, std::vector<float>{1, 2});
    const auto m = sgtw_match(extract_patches(src, 1, 1), tgt);
    EXPECT_EQ(m.at(0, 0), 0u);
    EXPECT_EQ(m.at(0, 1), 0u);  // 1-channel 1x1 patches all have cosine 1
    // Scaled copies have equal cosine as well.
    FeatureMap src2(1, 2, 4, std::vector<float>{3, 6, 1, 2, 9, 3, 3, 1});
    FeatureMap tgt2(1, 2, 2, std::vector<float>{1, 2, 3, 1});
    EXPECT_EQ(sgtw_match(extract_patches(src2, 2, 2), tgt2).at(0, 0), 0u);
}

TEST(SgtwMatch, ZeroPatchesNeverWin) {
    FeatureMap src(1, 1, 3, std::vector<float>{0, -1, 0});
    FeatureMap tgt(1, 1, 1, std::vector<float>{1});
    // Patch 1 has cosine -1 but is the only valid candidate.
    EXPECT_EQ(sgtw_match(extract_patches(src, 1, 1), tgt).at(0, 0), 1u);
    const auto all_zero = sgtw_match(extract_patches(FeatureMap(1, 2, 2), 1, 1), FeatureMap(1, 2, 2, 1.0f));
    for (auto i : all_zero.index) EXPECT_EQ(i, 0u);
}

TEST(SgtwMatch, OneHotMapHasOneEntryPerPosition) {
    std::mt19937 rng(24);
    const auto src = random_feature(2, 5, 5, rng);
    const auto m = sgtw_match(extract_patches(src, 2, 1), random_feature(2, 4, 6, rng));
    const auto oh = m.one_hot();
    EXPECT_EQ(oh.shape(), (Shape3{16, 3, 5}));
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) {
            float sum = 0;
            for (std::size_t k = 0; k < oh.channels(); ++k) sum += oh(k, r, c);
            EXPECT_EQ(sum, 1.0f);
            EXPECT_EQ(oh(m.at(r, c), r, c), 1.0f);
        }
}

TEST(SgtwReassemble, MatchesGatherOracle) {
    std::mt19937 rng(25);
    std::uniform_int_distribution<int> dim(3, 8), pd(1, 3), st(1, 3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t p = pd(rng), s = st(rng);
        const auto src = random_feature(3, std::max<std::size_t>(p, dim(rng)), std::max<std::size_t>(p, dim(rng)), rng);
        const auto bank = extract_patches(src, p, s);
        MatchMap m;
        m.rows = 1 + rng() % 4;
        m.cols = 1 + rng() % 4;
        m.candidates = bank.count();
        for (std::size_t i = 0; i < m.rows * m.cols; ++i) m.index.push_back(rng() % bank.count());
        const auto got = sgtw_reassemble(bank, m);
        const auto want = oracle::reassemble(src, m.index, m.rows, m.cols, p, s);
        ASSERT_EQ(got.shape(), want.shape());
        EXPECT_LE(fixtures::max_abs_diff(got, want), 1e-6) << "trial " << trial;
    }
}

TEST(SgtwReassemble, StrideEqualToPatchCopiesBlocks) {
    std::mt19937 rng(26);
    for (std::size_t p : {1, 2, 3}) {
        const auto src = random_feature(2, 3 * p, 3 * p, rng);
        const auto bank = extract_patches(src, p, p);
        const auto tgt = random_feature(2, 2 * p, 4 * p, rng);
        const auto m = sgtw_match(bank, tgt);
        const auto out = sgtw_reassemble(bank, m);
        for (std::size_t r = 0; r < m.rows; ++r)
            for (std::size_t q = 0; q < m.cols; ++q)
                for (std::size_t c = 0; c < 2; ++c)
                    for (std::size_t u = 0; u < p; ++u)
                        for (std::size_t v = 0; v < p; ++v)
                            ASSERT_EQ(out(c, r * p + u, q * p + v), bank.patches.at(m.at(r, q), c, u, v));
    }
}

TEST(SgtwReassemble, StrideOneStaysWithinSourceRange) {
    std::mt19937 rng(27);
    for (int trial = 0; trial < 20; ++trial) {
        const auto src = random_feature(3, 6, 6, rng, -5.0f, 5.0f);
        const auto bank = extract_patches(src, 3, 1);
        const auto out = sgtw_reassemble(bank, sgtw_match(bank, random_feature(3, 7, 5, rng)));
        for (std::size_t c = 0; c < 3; ++c) {
            const auto ch = src.channel(c);
            const auto [lo, hi] = std::minmax_element(ch.begin(), ch.end());
            for (float v : out.channel(c)) {
                EXPECT_GE(v, *lo);
                EXPECT_LE(v, *hi);
            }
        }
    }
}

TEST(SgtwReassemble, RejectsForeignMatchMap) {
    std::mt19937 rng(28);
    const auto bank = extract_patches(random_feature(1, 4, 4, rng), 2, 1);
    MatchMap m{1, 1, 3, {0}};
    EXPECT_THROW(sgtw_reassemble(bank, m), DimensionMismatch);
}

TEST(Vstr, IdentityReproducesSource) {
    std::mt19937 rng(29);
    for (auto variant : {FusionVariant::concat, FusionVariant::add}) {
        const auto style = random_feature(8, 8, 8, rng, 0.0f, 4.0f);
        const auto sem = random_feature(8, 8, 8, rng);
        for (std::size_t p : {1, 3, 7}) {
            const auto out = vstr(style, style, sem, sem, p, 1, {variant, 50.0});
            EXPECT_EQ(out.shape(), style.shape());
            EXPECT_LE(fixtures::max_abs_diff(out, style), 1e-5) << "p=" << p;
        }
    }
}

TEST(Vstr, DetailedReportsPatchCount) {
    std::mt19937 rng(30);
    const auto style = random_feature(4, 10, 10, rng);
    const auto sem = random_feature(2, 10, 10, rng);
    const auto res = vstr_detailed(style, random_feature(4, 10, 10, rng), sem, sem, 3, 1, {});
    EXPECT_EQ(res.patch_count, 64u);
    EXPECT_EQ(res.patch_size, 3u);
    EXPECT_EQ(res.matches.candidates, 64u);
}

TEST(Vstr, Deterministic) {
    std::mt19937 rng(31);
    const auto style = random_feature(6, 9, 9, rng);
    const auto temp = random_feature(6, 9, 9, rng);
    const auto ss = random_feature(3, 9, 9, rng), ts = random_feature(3, 9, 9, rng);
    const auto a = vstr_detailed(style, temp, ss, ts, 3, 1, {});
    const auto b = vstr_detailed(style, temp, ss, ts, 3, 1, {});
    EXPECT_EQ(a.feature, b.feature);
    EXPECT_EQ(a.matches, b.matches);
}

TEST(Vstr, LargeOmegaAddModeIgnoresContent) {
    // With omega >= 1e6 the match map must depend on semantics alone, so
    // permuting the content feature cannot change it.
    std::mt19937 rng(32);
    for (int trial = 0; trial < 10; ++trial) {
        const auto ss = fixtures::integer_feature(4, 6, 6, rng, 1, 1000);
        const auto ts = fixtures::integer_feature(4, 6, 6, rng, 1, 1000);
        const auto style = fixtures::integer_feature(4, 6, 6, rng, -9, 9);
        auto temp = fixtures::integer_feature(4, 6, 6, rng, -9, 9);
        const FusionMode mode{FusionVariant::add, 1e6};
        const auto base = vstr_detailed(style, temp, ss, ts, 3, 1, mode).matches;
        std::shuffle(temp.values().begin(), temp.values().end(), rng);
        auto style2 = style;
        std::shuffle(style2.values().begin(), style2.values().end(), rng);
        EXPECT_EQ(vstr_detailed(style2, temp, ss, ts, 3, 1, mode).matches, base) << "trial " << trial;
    }
}

TEST(Vstr, RejectsChannelMismatch) {
    EXPECT_THROW(vstr(FeatureMap(2, 4, 4), FeatureMap(3, 4, 4), FeatureMap(1, 4, 4), FeatureMap(1, 4, 4), 2, 1, {}),
                 DimensionMismatch);
}
