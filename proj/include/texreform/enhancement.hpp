#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "texreform/error.hpp"
#include "texreform/tensor.hpp"
#include "texreform/vstr.hpp"

namespace texreform {

/// Per-pixel label ids. Every position carries exactly one label, so the
/// masks {label == k} partition the grid.
struct LabelGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint16_t> labels;

    std::uint16_t at(std::size_t r, std::size_t c) const { return labels[r * width + c]; }

    /// Nearest-neighbour resampling (index floor(i * in / out)).
    LabelGrid resampled(std::size_t h, std::size_t w) const {
        LabelGrid out{h, w, std::vector<std::uint16_t>(h * w)};
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) out.labels[r * w + c] = at(r * height / h, c * width / w);
        return out;
    }

    friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

enum class EnhancementVariant { global, per_label };

struct EnhancementScope {
    EnhancementVariant variant = EnhancementVariant::global;
    LabelGrid source_labels;  // at source feature resolution
    LabelGrid target_labels;  // at target feature resolution

    static EnhancementScope global() { return {}; }
    static EnhancementScope per_label(LabelGrid source, LabelGrid target) {
        return {EnhancementVariant::per_label, std::move(source), std::move(target)};
    }
};

namespace detail {

struct Moments {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;
};

inline Moments masked_moments(std::span<const float> values, const std::vector<std::uint16_t>* labels,
                              std::uint16_t label) {
    Moments m;
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (labels && (*labels)[i] != label) continue;
        sum += values[i];
        ++m.count;
    }
    if (m.count == 0) return m;
    m.mean = sum / static_cast<double>(m.count);
    double sq = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (labels && (*labels)[i] != label) continue;
        sq += (values[i] - m.mean) * (values[i] - m.mean);
    }
    m.stddev = std::sqrt(sq / static_cast<double>(m.count));
    return m;
}

}  // namespace detail

/// First-order statistics matching: every target channel is re-standardized
/// and given the source channel's mean and standard deviation.
///
/// With a per-label scope, statistics are matched inside each label region;
/// target labels absent from the source use the source's global statistics.
inline FeatureMap se(const FeatureMap& source_feat, const FeatureMap& target_feat,
                     const EnhancementScope& scope = EnhancementScope::global()) {
    if (source_feat.channels() != target_feat.channels()) {
        throw DimensionMismatch("se: source " + source_feat.shape().str() + " and target " +
                                target_feat.shape().str() + " differ in channels");
    }
    if (source_feat.plane() == 0 || target_feat.plane() == 0) {
        throw DimensionMismatch("se: empty feature map");
    }
    const bool scoped = scope.variant == EnhancementVariant::per_label;
    std::vector<std::uint16_t> target_ids{0};
    if (scoped) {
        const auto& sl = scope.source_labels;
        const auto& tl = scope.target_labels;
        if (sl.height != source_feat.height() || sl.width != source_feat.width() ||
            sl.labels.size() != source_feat.plane()) {
            throw DimensionMismatch("se: source label grid does not cover source feature " +
                                    source_feat.shape().str());
        }
        if (tl.height != target_feat.height() || tl.width != target_feat.width() ||
            tl.labels.size() != target_feat.plane()) {
            throw DimensionMismatch("se: target label grid does not cover target feature " +
                                    target_feat.shape().str());
        }
        target_ids = tl.labels;
        std::sort(target_ids.begin(), target_ids.end());
        target_ids.erase(std::unique(target_ids.begin(), target_ids.end()), target_ids.end());
    }

    FeatureMap out(target_feat.shape());
    for (std::size_t c = 0; c < target_feat.channels(); ++c) {
        const auto src = source_feat.channel(c);
        const auto tgt = target_feat.channel(c);
        auto dst = out.channel(c);
        const detail::Moments src_global = detail::masked_moments(src, nullptr, 0);
        for (std::uint16_t label : target_ids) {
            const auto* tmask = scoped ? &scope.target_labels.labels : nullptr;
            detail::Moments s = src_global;
            if (scoped) {
                const auto local = detail::masked_moments(src, &scope.source_labels.labels, label);
                if (local.count > 0) s = local;
            }
            const detail::Moments t = detail::masked_moments(tgt, tmask, label);
            const double scale = s.stddev / std::max(t.stddev, kEpsilon);
            for (std::size_t i = 0; i < tgt.size(); ++i) {
                if (tmask && (*tmask)[i] != label) continue;
                dst[i] = static_cast<float>((tgt[i] - t.mean) * scale + s.mean);
            }
        }
    }
    return out;
}

}  // namespace texreform
