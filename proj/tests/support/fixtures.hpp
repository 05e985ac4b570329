#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include "texreform/imaging.hpp"
#include "texreform/tensor.hpp"
#include "texreform/weights.hpp"

namespace fixtures {

using texreform::FeatureMap;
using texreform::Kernel4D;
using texreform::Rgb8Image;

inline FeatureMap random_feature(std::size_t c, std::size_t h, std::size_t w, std::mt19937& rng, float lo = -1.0f,
                                 float hi = 1.0f) {
    std::uniform_real_distribution<float> d(lo, hi);
    FeatureMap x(c, h, w);
    for (float& v : x.values()) v = d(rng);
    return x;
}

inline FeatureMap integer_feature(std::size_t c, std::size_t h, std::size_t w, std::mt19937& rng, int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    FeatureMap x(c, h, w);
    for (float& v : x.values()) v = static_cast<float>(d(rng));
    return x;
}

inline Kernel4D random_kernel(std::size_t o, std::size_t i, std::size_t kh, std::size_t kw, std::mt19937& rng,
                              bool with_bias) {
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    Kernel4D k(o, i, kh, kw);
    for (float& v : k.data) v = d(rng);
    if (with_bias) {
        k.bias.resize(o);
        for (float& v : k.bias) v = d(rng);
    }
    return k;
}

/// Procedural texture: oriented stripes, a checker and seeded noise.
inline Rgb8Image textured_image(std::size_t h, std::size_t w, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double fx = 0.15 + 0.3 * u(rng), fy = 0.1 + 0.3 * u(rng), phase = 6.28 * u(rng);
    const std::size_t cell = 4 + seed % 5;
    Rgb8Image img(w, h);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const double stripe = 0.5 + 0.5 * std::sin(fx * c + fy * r + phase);
            const double check = ((r / cell + c / cell) % 2) ? 0.8 : 0.2;
            auto* px = img.at(r, c);
            px[0] = static_cast<std::uint8_t>(std::lround(255 * (0.6 * stripe + 0.4 * u(rng))));
            px[1] = static_cast<std::uint8_t>(std::lround(255 * (0.5 * check + 0.5 * u(rng))));
            px[2] = static_cast<std::uint8_t>(std::lround(255 * (0.3 * stripe + 0.3 * check + 0.4 * u(rng))));
        }
    return img;
}

/// Two flat label regions split at `split` (columns when vertical, rows otherwise).
inline Rgb8Image two_region_map(std::size_t h, std::size_t w, bool vertical, std::size_t split) {
    Rgb8Image img(w, h);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const bool first = vertical ? c < split : r < split;
            auto* px = img.at(r, c);
            px[0] = first ? 230 : 20;
            px[1] = first ? 40 : 90;
            px[2] = first ? 30 : 210;
        }
    return img;
}

inline const texreform::WeightStore& random_weights() {
    static const texreform::WeightStore store = texreform::make_random_weights(7);
    return store;
}

/// Trained weights from $TFR_WEIGHTS, or nothing when the variable is unset,
/// the file is missing, or the store is a generated one.
inline const texreform::WeightStore* trained_weights() {
    static const std::optional<texreform::WeightStore> store = []() -> std::optional<texreform::WeightStore> {
        const char* path = std::getenv("TFR_WEIGHTS");
        if (!path || !*path || !std::filesystem::exists(path)) return std::nullopt;
        auto w = texreform::load_weights(path);
        if (w.is_random()) return std::nullopt;
        return w;
    }();
    return store ? &*store : nullptr;
}

inline double max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.values()[i]) - b.values()[i]));
    return m;
}

/// max |a - b| / max(1, max |b|).
inline double max_rel_error(const FeatureMap& a, const FeatureMap& b) {
    double scale = 1.0;
    for (float v : b.values()) scale = std::max(scale, static_cast<double>(std::abs(v)));
    return max_abs_diff(a, b) / scale;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("texreform_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixtures
