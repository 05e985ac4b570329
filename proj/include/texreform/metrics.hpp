#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "texreform/imaging.hpp"

namespace texreform {

/// Mean SSIM over the three channels of two 8-bit images (unit range,
/// 11x11 Gaussian window with sigma 1.5, valid region only).
inline double ssim(const Rgb8Image& a, const Rgb8Image& b) {
    if (a.width != b.width || a.height != b.height) {
        throw DimensionMismatch("ssim: images differ in size");
    }
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    constexpr double C1 = 0.01 * 0.01;
    constexpr double C2 = 0.03 * 0.03;
    if (a.width < kWin || a.height < kWin) throw DimensionMismatch("ssim: images smaller than window");

    std::array<double, kWin> g{};
    double gsum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double x = i - kWin / 2;
        g[static_cast<std::size_t>(i)] = std::exp(-x * x / (2 * kSigma * kSigma));
        gsum += g[static_cast<std::size_t>(i)];
    }
    for (double& v : g) v /= gsum;

    const std::size_t H = a.height;
    const std::size_t W = a.width;
    const std::size_t oh = H - kWin + 1;
    const std::size_t ow = W - kWin + 1;
    double total = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        // Separable filtering of x, y, x^2, y^2, xy.
        std::array<std::vector<double>, 5> rows;
        for (auto& r : rows) r.assign(H * ow, 0.0);
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t q = 0; q < ow; ++q) {
                for (std::size_t k = 0; k < kWin; ++k) {
                    const double x = a.at(r, q + k)[c] / 255.0;
                    const double y = b.at(r, q + k)[c] / 255.0;
                    const double wk = g[k];
                    rows[0][r * ow + q] += wk * x;
                    rows[1][r * ow + q] += wk * y;
                    rows[2][r * ow + q] += wk * x * x;
                    rows[3][r * ow + q] += wk * y * y;
                    rows[4][r * ow + q] += wk * x * y;
                }
            }
        double acc = 0.0;
        for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t q = 0; q < ow; ++q) {
                std::array<double, 5> m{};
                for (std::size_t k = 0; k < kWin; ++k)
                    for (std::size_t f = 0; f < 5; ++f) m[f] += g[k] * rows[f][(r + k) * ow + q];
                const double vx = m[2] - m[0] * m[0];
                const double vy = m[3] - m[1] * m[1];
                const double cxy = m[4] - m[0] * m[1];
                acc += ((2 * m[0] * m[1] + C1) * (2 * cxy + C2)) /
                       ((m[0] * m[0] + m[1] * m[1] + C1) * (vx + vy + C2));
            }
        total += acc / static_cast<double>(oh * ow);
    }
    return total / 3.0;
}

/// Per-channel mean/std of an 8-bit image in unit range.
inline std::array<ChannelStats, 3> pixel_stats(const Rgb8Image& img) {
    std::array<ChannelStats, 3> out{};
    const double n = static_cast<double>(img.width * img.height);
    for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < img.width * img.height; ++i) sum += img.pixels[3 * i + c] / 255.0;
        const double mean = sum / n;
        double sq = 0.0;
        for (std::size_t i = 0; i < img.width * img.height; ++i) {
            const double d = img.pixels[3 * i + c] / 255.0 - mean;
            sq += d * d;
        }
        out[c] = {mean, std::sqrt(sq / n)};
    }
    return out;
}

/// Sum over channels of |mean difference| + |std difference|.
inline double stat_distance(const Rgb8Image& a, const Rgb8Image& b) {
    const auto sa = pixel_stats(a);
    const auto sb = pixel_stats(b);
    double d = 0.0;
    for (std::size_t c = 0; c < 3; ++c) d += std::abs(sa[c].mean - sb[c].mean) + std::abs(sa[c].stddev - sb[c].stddev);
    return d;
}

/// Mean absolute per-pixel difference in unit range.
inline double mean_abs_error(const Rgb8Image& a, const Rgb8Image& b) {
    if (a.pixels.size() != b.pixels.size()) throw DimensionMismatch("mean_abs_error: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) acc += std::abs(a.pixels[i] - b.pixels[i]) / 255.0;
    return a.pixels.empty() ? 0.0 : acc / static_cast<double>(a.pixels.size());
}

}  // namespace texreform
