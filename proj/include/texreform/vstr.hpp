#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "texreform/error.hpp"
#include "texreform/tensor.hpp"

namespace texreform {

/// Numerical guard for standard deviations and patch norms.
inline constexpr double kEpsilon = 1e-8;

/// Row-major set of p x p windows cut from a feature map on a stride grid.
/// `patches` is a filter bank with one filter per window.
struct PatchBank {
    std::size_t patch_size = 0;
    std::size_t stride = 1;
    std::size_t rows = 0;  // origin grid
    std::size_t cols = 0;
    Kernel4D patches;

    std::size_t count() const noexcept { return patches.out_channels; }
    std::size_t channels() const noexcept { return patches.in_channels; }
};

/// Per target grid position, the index of the selected source patch. The
/// one-hot score map is materialized on demand.
struct MatchMap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t candidates = 0;  // n_s, channel count of the one-hot map
    std::vector<std::uint32_t> index;

    std::uint32_t at(std::size_t r, std::size_t c) const { return index[r * cols + c]; }

    FeatureMap one_hot() const {
        FeatureMap m(candidates, rows, cols);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) m(at(r, c), r, c) = 1.0f;
        return m;
    }

    friend bool operator==(const MatchMap&, const MatchMap&) = default;
};

enum class FusionVariant { concat, add, downsample };

struct FusionMode {
    FusionVariant variant = FusionVariant::concat;
    double omega = 50.0;
};

inline const char* to_string(FusionVariant v) {
    switch (v) {
        case FusionVariant::concat: return "concat";
        case FusionVariant::add: return "add";
        case FusionVariant::downsample: return "downsample";
    }
    return "?";
}

/// Per-channel (x - mean) / max(std, eps).
inline FeatureMap standardize(const FeatureMap& feature) {
    FeatureMap out(feature.shape());
    if (feature.plane() == 0) return out;
    const auto stats = channel_stats(feature);
    for (std::size_t c = 0; c < feature.channels(); ++c) {
        const double mean = stats[c].mean;
        const double inv = 1.0 / std::max(stats[c].stddev, kEpsilon);
        const auto src = feature.channel(c);
        auto dst = out.channel(c);
        for (std::size_t i = 0; i < src.size(); ++i) {
            dst[i] = static_cast<float>((src[i] - mean) * inv);
        }
    }
    return out;
}

/// Combines a standardized content feature with omega-weighted semantics.
///
/// concat: [feature || omega * semantic]; add: feature + omega * semantic;
/// downsample: [feature || omega * rgb], where the 3-channel semantic image is
/// nearest-resampled to the feature grid if needed.
inline FeatureMap fuse_semantics(const FeatureMap& feature_std, const FeatureMap& semantic,
                                 const FusionMode& mode) {
    if (mode.omega < 0.0 || !std::isfinite(mode.omega)) {
        throw InvalidArgument("semantic weight omega must be a finite value >= 0");
    }
    const float w = static_cast<float>(mode.omega);
    FeatureMap sem = semantic;
    if (mode.variant == FusionVariant::downsample) {
        if (semantic.channels() != 3) {
            throw DimensionMismatch("downsample fusion expects a 3-channel semantic map, got " +
                                    semantic.shape().str());
        }
        if (semantic.height() != feature_std.height() || semantic.width() != feature_std.width()) {
            sem = resample_nearest(semantic, feature_std.height(), feature_std.width());
        }
    } else if (semantic.height() != feature_std.height() || semantic.width() != feature_std.width()) {
        throw DimensionMismatch("fuse_semantics: feature " + feature_std.shape().str() +
                                " and semantic feature " + semantic.shape().str() +
                                " are not spatially aligned");
    }
    for (float& v : sem.values()) v *= w;
    if (mode.variant == FusionVariant::add) {
        if (sem.channels() != feature_std.channels()) {
            throw DimensionMismatch("add fusion needs equal channel counts: " + feature_std.shape().str() +
                                    " vs " + sem.shape().str());
        }
        for (std::size_t i = 0; i < sem.size(); ++i) sem.values()[i] += feature_std.values()[i];
        return sem;
    }
    return concat_channels(feature_std, sem);
}

/// Largest patch that still leaves a 2x2 match grid: min(Hs, Ws, Ht, Wt) - 1.
inline std::size_t global_patch_size(std::size_t source_h, std::size_t source_w, std::size_t target_h,
                                     std::size_t target_w) {
    const std::size_t m = std::min({source_h, source_w, target_h, target_w});
    if (m < 2) {
        throw DegenerateFeature("global patch size needs every feature dim >= 2, smallest is " +
                                std::to_string(m));
    }
    return m - 1;
}

inline std::size_t global_patch_size(const FeatureMap& fs, const FeatureMap& ft) {
    return global_patch_size(fs.height(), fs.width(), ft.height(), ft.width());
}

inline PatchBank extract_patches(const FeatureMap& feature, std::size_t p, std::size_t s) {
    if (p == 0 || s == 0) throw InvalidArgument("patch size and stride must be >= 1");
    if (p > feature.height() || p > feature.width()) {
        throw DimensionMismatch("patch size " + std::to_string(p) + " exceeds feature " +
                                feature.shape().str());
    }
    PatchBank bank;
    bank.patch_size = p;
    bank.stride = s;
    bank.rows = (feature.height() - p) / s + 1;
    bank.cols = (feature.width() - p) / s + 1;
    const std::size_t C = feature.channels();
    bank.patches = Kernel4D(bank.rows * bank.cols, C, p, p);
    float* dst = bank.patches.data.data();
    for (std::size_t r = 0; r < bank.rows; ++r)
        for (std::size_t q = 0; q < bank.cols; ++q)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < p; ++i) {
                    const float* src = &feature(c, r * s + i, q * s);
                    dst = std::copy(src, src + p, dst);
                }
    return bank;
}

namespace detail {

// Float scores within this fraction of the target patch norm of the best
// score are re-ranked in double precision.
inline constexpr double kRescoreTolerance = 1e-4;
inline constexpr std::size_t kRescoreMaxCandidates = 16;

}  // namespace detail

/// Selects, for every p x p window of `fused_target` on the bank's stride
/// grid, the source patch with the highest cosine similarity.
///
/// Scores are a convolution of the target with the L2-normalized patches.
/// Zero-norm patches never win; if every patch is zero-norm, patch 0 is
/// chosen everywhere. Ties go to the lowest patch index.
inline MatchMap sgtw_match(const PatchBank& fused_source, const FeatureMap& fused_target) {
    const std::size_t p = fused_source.patch_size;
    const std::size_t s = fused_source.stride;
    const std::size_t n = fused_source.count();
    const std::size_t K = fused_source.patches.filter_size();
    if (fused_target.channels() != fused_source.channels()) {
        throw DimensionMismatch("sgtw_match: source patches have " + std::to_string(fused_source.channels()) +
                                " channels, target is " + fused_target.shape().str());
    }
    if (fused_target.height() < p || fused_target.width() < p) {
        throw DimensionMismatch("sgtw_match: target " + fused_target.shape().str() +
                                " smaller than patch size " + std::to_string(p));
    }
    if (n == 0) throw InvalidArgument("sgtw_match: empty patch bank");

    MatchMap result;
    result.rows = (fused_target.height() - p) / s + 1;
    result.cols = (fused_target.width() - p) / s + 1;
    result.candidates = n;
    result.index.assign(result.rows * result.cols, 0);

    // Normalized filters; invalid (zero-norm) rows stay zero and are skipped.
    std::vector<float> filters(n * K, 0.0f);
    std::vector<double> norms(n, 0.0);
    std::vector<char> valid(n, 0);
    const float* raw = fused_source.patches.data.data();
    bool any_valid = false;
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t k = 0; k < K; ++k) sq += static_cast<double>(raw[i * K + k]) * raw[i * K + k];
        norms[i] = std::sqrt(sq);
        if (norms[i] > kEpsilon) {
            valid[i] = 1;
            any_valid = true;
            const double inv = 1.0 / norms[i];
            for (std::size_t k = 0; k < K; ++k) filters[i * K + k] = static_cast<float>(raw[i * K + k] * inv);
        }
    }
    if (!any_valid) return result;

    const std::size_t rows_per_chunk =
        std::clamp<std::size_t>(detail::kIm2colBudget / std::max<std::size_t>(K * result.cols, 1), 1,
                                result.rows);
    std::vector<float> col(K * rows_per_chunk * result.cols);
    std::vector<float> scores(n * rows_per_chunk * result.cols);
    std::vector<double> tnorm(rows_per_chunk * result.cols);
    std::vector<std::size_t> best(rows_per_chunk * result.cols);
    std::vector<float> best_score(best.size());
    std::vector<float> threshold(best.size());
    std::vector<std::uint32_t> near_count(best.size());
    for (std::size_t r0 = 0; r0 < result.rows; r0 += rows_per_chunk) {
        const std::size_t r1 = std::min(result.rows, r0 + rows_per_chunk);
        const std::size_t ncols = (r1 - r0) * result.cols;
        detail::im2col_rows(fused_target, p, p, s, Padding::none(), result.cols, r0, r1, col.data());
        detail::sgemm(false, n, ncols, K, filters.data(), K, col.data(), ncols, 0.0f, scores.data(), ncols);

        std::fill(tnorm.begin(), tnorm.begin() + static_cast<std::ptrdiff_t>(ncols), 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            const float* row = col.data() + k * ncols;
            for (std::size_t j = 0; j < ncols; ++j) tnorm[j] += static_cast<double>(row[j]) * row[j];
        }

        std::fill(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(ncols), n);
        std::fill(best_score.begin(), best_score.begin() + static_cast<std::ptrdiff_t>(ncols),
                  -std::numeric_limits<float>::infinity());
        for (std::size_t i = 0; i < n; ++i) {
            if (!valid[i]) continue;
            const float* row = scores.data() + i * ncols;
            for (std::size_t j = 0; j < ncols; ++j) {
                if (best[j] == n || row[j] > best_score[j]) {
                    best[j] = i;
                    best_score[j] = row[j];
                }
            }
        }
        // Re-rank near-ties exactly so that float rounding in the GEMM cannot
        // change the selected patch.
        for (std::size_t j = 0; j < ncols; ++j) {
            threshold[j] = best_score[j] - static_cast<float>(detail::kRescoreTolerance * std::sqrt(tnorm[j]));
            near_count[j] = 0;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!valid[i]) continue;
            const float* row = scores.data() + i * ncols;
            for (std::size_t j = 0; j < ncols; ++j) near_count[j] += row[j] >= threshold[j];
        }
        for (std::size_t j = 0; j < ncols; ++j) {
            if (near_count[j] > 1 && near_count[j] <= detail::kRescoreMaxCandidates) {
                double best_exact = -std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < n; ++i) {
                    if (!valid[i] || scores[i * ncols + j] < threshold[j]) continue;
                    const float* a = raw + i * K;
                    double dot = 0.0;
                    for (std::size_t k = 0; k < K; ++k) dot += static_cast<double>(a[k]) * col[k * ncols + j];
                    dot /= norms[i];
                    if (dot > best_exact) {
                        best_exact = dot;
                        best[j] = i;
                    }
                }
            }
            result.index[r0 * result.cols + j] = static_cast<std::uint32_t>(best[j]);
        }
    }
    return result;
}

/// Scatters the selected original patches onto the target grid and divides
/// by the per-pixel overlap count. Equivalent to a transposed convolution of
/// the one-hot match map with the original patches, normalized by the
/// transposed convolution of ones.
inline FeatureMap sgtw_reassemble(const PatchBank& original_source, const MatchMap& matches) {
    if (matches.candidates != original_source.count()) {
        throw DimensionMismatch("sgtw_reassemble: match map has " + std::to_string(matches.candidates) +
                                " channels, patch bank has " + std::to_string(original_source.count()) +
                                " patches");
    }
    const std::size_t p = original_source.patch_size;
    const std::size_t s = original_source.stride;
    const std::size_t C = original_source.channels();
    const std::size_t oh = (matches.rows - 1) * s + p;
    const std::size_t ow = (matches.cols - 1) * s + p;
    std::vector<double> acc(C * oh * ow, 0.0);
    std::vector<std::uint32_t> overlap(oh * ow, 0);
    const std::size_t K = original_source.patches.filter_size();
    for (std::size_t r = 0; r < matches.rows; ++r) {
        for (std::size_t q = 0; q < matches.cols; ++q) {
            const std::uint32_t idx = matches.at(r, q);
            if (idx >= original_source.count()) throw InvalidArgument("match index out of range");
            const float* patch = original_source.patches.data.data() + static_cast<std::size_t>(idx) * K;
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < p; ++i) {
                    double* dst = acc.data() + (c * oh + r * s + i) * ow + q * s;
                    const float* src = patch + (c * p + i) * p;
                    for (std::size_t j = 0; j < p; ++j) dst[j] += src[j];
                }
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < p; ++j) ++overlap[(r * s + i) * ow + q * s + j];
        }
    }
    FeatureMap out(C, oh, ow);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < oh * ow; ++k) {
            const std::uint32_t n = overlap[k];
            out.values()[c * oh * ow + k] = n ? static_cast<float>(acc[c * oh * ow + k] / n) : 0.0f;
        }
    return out;
}

/// Full output of one view-specific reformation, including the matches.
struct VstrResult {
    FeatureMap feature;
    MatchMap matches;
    std::size_t patch_size = 0;
    std::size_t patch_count = 0;
};

/// Reforms `source_style` onto the layout of `temp_target` under semantic
/// guidance, using p x p patches on a stride-s grid.
inline VstrResult vstr_detailed(const FeatureMap& source_style, const FeatureMap& temp_target,
                                const FeatureMap& source_sem, const FeatureMap& target_sem, std::size_t p,
                                std::size_t s, const FusionMode& mode) {
    if (source_style.channels() != temp_target.channels()) {
        throw DimensionMismatch("vstr: style feature " + source_style.shape().str() + " and target feature " +
                                temp_target.shape().str() + " differ in channels");
    }
    const FeatureMap fused_source = fuse_semantics(standardize(source_style), source_sem, mode);
    const FeatureMap fused_target = fuse_semantics(standardize(temp_target), target_sem, mode);
    const PatchBank fused_bank = extract_patches(fused_source, p, s);
    VstrResult result;
    result.matches = sgtw_match(fused_bank, fused_target);
    const PatchBank original = extract_patches(source_style, p, s);
    result.feature = sgtw_reassemble(original, result.matches);
    result.patch_size = p;
    result.patch_count = original.count();
    return result;
}

inline FeatureMap vstr(const FeatureMap& source_style, const FeatureMap& temp_target, const FeatureMap& source_sem,
                       const FeatureMap& target_sem, std::size_t p, std::size_t s, const FusionMode& mode) {
    return vstr_detailed(source_style, temp_target, source_sem, target_sem, p, s, mode).feature;
}

}  // namespace texreform
