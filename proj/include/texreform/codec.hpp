#pragma once

#include <array>
#include <optional>

#include "texreform/architecture.hpp"
#include "texreform/tensor.hpp"
#include "texreform/weights.hpp"

namespace texreform {

/// relu{X}_1 activations for X = 1..max_level from a single encoder pass.
struct EncodedLevels {
    std::array<std::optional<FeatureMap>, kMaxLevel> features;

    const FeatureMap& at(int level) const {
        detail::check_level(level);
        const auto& f = features[static_cast<std::size_t>(level - 1)];
        if (!f) throw InvalidArgument("level " + std::to_string(level) + " was not encoded");
        return *f;
    }
    bool has(int level) const {
        return level >= kMinLevel && level <= kMaxLevel && features[static_cast<std::size_t>(level - 1)];
    }
};

namespace detail {

inline FeatureMap apply_conv(const FeatureMap& x, const LayerSpec& spec, const WeightStore& w) {
    FeatureMap y = conv2d(x, w.layer(spec.name), 1, Padding::reflect(1));
    if (spec.relu) relu_inplace(y);
    return y;
}

inline void check_image(const FeatureMap& image, int level) {
    if (image.channels() != 3) {
        throw DimensionMismatch("encoder expects a 3-channel image, got " + image.shape().str());
    }
    const std::size_t f = level_factor(level);
    if (image.height() == 0 || image.width() == 0 || image.height() % f != 0 || image.width() % f != 0) {
        throw DimensionMismatch("image " + image.shape().str() + " not divisible by " +
                                std::to_string(f) + " as required for level " + std::to_string(level));
    }
}

}  // namespace detail

/// Runs the VGG prefix once and records every relu{X}_1 up to max_level.
inline EncodedLevels encode_levels(const FeatureMap& image, int max_level, const WeightStore& weights) {
    detail::check_level(max_level);
    detail::check_image(image, max_level);
    EncodedLevels out;
    FeatureMap x = image;
    int block = 1;
    for (const auto& spec : encoder_layers(max_level)) {
        if (spec.kind == LayerKind::pool) {
            x = max_pool2d(x, 2, 2);
            ++block;
            continue;
        }
        x = detail::apply_conv(x, spec, weights);
        if (spec.name.ends_with("_1")) out.features[static_cast<std::size_t>(block - 1)] = x;
    }
    return out;
}

/// relu{level}_1 features of a normalized 3xHxW image.
inline FeatureMap encode(const FeatureMap& image, int level, const WeightStore& weights) {
    auto levels = encode_levels(image, level, weights);
    return std::move(*levels.features[static_cast<std::size_t>(level - 1)]);
}

/// Inverts relu{level}_1 features back to a 3-channel image (no clamping).
inline FeatureMap decode(const FeatureMap& feature, int level, const WeightStore& weights) {
    detail::check_level(level);
    if (feature.channels() != level_channels(level)) {
        throw DimensionMismatch("decoder " + std::to_string(level) + " expects " +
                                std::to_string(level_channels(level)) + " channels, got " +
                                feature.shape().str());
    }
    FeatureMap x = feature;
    for (const auto& spec : decoder_layers(level)) {
        if (spec.kind == LayerKind::upsample) {
            x = upsample_nearest(x, 2);
        } else {
            x = detail::apply_conv(x, spec, weights);
        }
    }
    return x;
}

namespace detail {
inline double mean_squared(const FeatureMap& a, const FeatureMap& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.values()[i]) - b.values()[i];
        acc += d * d;
    }
    return a.size() ? acc / static_cast<double>(a.size()) : 0.0;
}
}  // namespace detail

/// Pixel MSE plus lambda times relu{level}_1 feature MSE between the
/// original and reconstructed images.
inline double reconstruction_loss(const FeatureMap& original, const FeatureMap& reconstructed, int level,
                                  const WeightStore& weights, double lambda = 1.0) {
    if (original.shape() != reconstructed.shape()) {
        throw DimensionMismatch("reconstruction_loss: " + original.shape().str() + " vs " +
                                reconstructed.shape().str());
    }
    double loss = detail::mean_squared(reconstructed, original);
    if (lambda != 0.0) {
        loss += lambda * detail::mean_squared(encode(reconstructed, level, weights),
                                              encode(original, level, weights));
    }
    return loss;
}

}  // namespace texreform
