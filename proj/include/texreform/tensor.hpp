#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <cblas.h>

#include "texreform/error.hpp"

namespace texreform {

struct Shape3 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const noexcept { return channels * height * width; }
    friend bool operator==(const Shape3&, const Shape3&) = default;

    std::string str() const {
        return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
    }
};

/// Dense activation tensor, (channel, row, column) row-major.
class FeatureMap {
public:
    FeatureMap() = default;

    FeatureMap(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f)
        : shape_{channels, height, width}, data_(shape_.size(), fill) {}

    FeatureMap(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> data)
        : shape_{channels, height, width}, data_(std::move(data)) {
        if (data_.size() != shape_.size()) {
            throw DimensionMismatch("feature data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_.str());
        }
    }

    explicit FeatureMap(Shape3 shape, float fill = 0.0f)
        : FeatureMap(shape.channels, shape.height, shape.width, fill) {}

    const Shape3& shape() const noexcept { return shape_; }
    std::size_t channels() const noexcept { return shape_.channels; }
    std::size_t height() const noexcept { return shape_.height; }
    std::size_t width() const noexcept { return shape_.width; }
    std::size_t plane() const noexcept { return shape_.height * shape_.width; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    std::vector<float>& values() noexcept { return data_; }
    const std::vector<float>& values() const noexcept { return data_; }

    std::span<float> channel(std::size_t c) noexcept { return {data_.data() + c * plane(), plane()}; }
    std::span<const float> channel(std::size_t c) const noexcept {
        return {data_.data() + c * plane(), plane()};
    }

    float& operator()(std::size_t c, std::size_t r, std::size_t col) noexcept {
        return data_[(c * shape_.height + r) * shape_.width + col];
    }
    const float& operator()(std::size_t c, std::size_t r, std::size_t col) const noexcept {
        return data_[(c * shape_.height + r) * shape_.width + col];
    }

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

private:
    Shape3 shape_{};
    std::vector<float> data_;
};

/// Convolution filter bank: out_channels x in_channels x k_h x k_w, row-major.
struct Kernel4D {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t k_h = 0;
    std::size_t k_w = 0;
    std::vector<float> data;
    std::vector<float> bias;  // empty, or one value per output channel

    Kernel4D() = default;
    Kernel4D(std::size_t out, std::size_t in, std::size_t kh, std::size_t kw, float fill = 0.0f)
        : out_channels(out), in_channels(in), k_h(kh), k_w(kw), data(out * in * kh * kw, fill) {}

    std::size_t filter_size() const noexcept { return in_channels * k_h * k_w; }

    float& at(std::size_t o, std::size_t i, std::size_t r, std::size_t c) noexcept {
        return data[((o * in_channels + i) * k_h + r) * k_w + c];
    }
    float at(std::size_t o, std::size_t i, std::size_t r, std::size_t c) const noexcept {
        return data[((o * in_channels + i) * k_h + r) * k_w + c];
    }

    void validate() const {
        if (data.size() != out_channels * in_channels * k_h * k_w) {
            throw DimensionMismatch("kernel data length does not match its declared shape");
        }
        if (!bias.empty() && bias.size() != out_channels) {
            throw DimensionMismatch("kernel bias length " + std::to_string(bias.size()) +
                                    " != out_channels " + std::to_string(out_channels));
        }
    }

    std::string shape_str() const {
        return std::to_string(out_channels) + "x" + std::to_string(in_channels) + "x" +
               std::to_string(k_h) + "x" + std::to_string(k_w);
    }

    friend bool operator==(const Kernel4D&, const Kernel4D&) = default;
};

enum class PaddingMode { zero, reflect };

struct Padding {
    PaddingMode mode = PaddingMode::zero;
    std::size_t size = 0;

    static Padding none() { return {}; }
    static Padding zeros(std::size_t n) { return {PaddingMode::zero, n}; }
    static Padding reflect(std::size_t n) { return {PaddingMode::reflect, n}; }
};

struct ChannelStats {
    double mean = 0.0;
    double stddev = 0.0;
};

namespace detail {

inline void sgemm(bool trans_a, std::size_t m, std::size_t n, std::size_t k, const float* a,
                  std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
                  std::size_t ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0f, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

// Maps a padded coordinate back into [0, n). Returns -1 for zero padding hits.
inline long pad_index(long i, long n, PaddingMode mode) noexcept {
    if (i >= 0 && i < n) return i;
    if (mode == PaddingMode::zero) return -1;
    if (n == 1) return 0;
    const long period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

inline std::size_t conv_out_dim(std::size_t in, std::size_t pad, std::size_t k, std::size_t stride) {
    return (in + 2 * pad - k) / stride + 1;
}

// Unfolds output rows [row_begin, row_end) of a convolution into a
// (C*kh*kw) x (rows*out_w) column matrix.
inline void im2col_rows(const FeatureMap& in, std::size_t kh, std::size_t kw, std::size_t stride,
                        const Padding& pad, std::size_t out_w, std::size_t row_begin,
                        std::size_t row_end, float* col) {
    const long H = static_cast<long>(in.height());
    const long W = static_cast<long>(in.width());
    const long p = static_cast<long>(pad.size);
    const long s = static_cast<long>(stride);
    const std::size_t ncols = (row_end - row_begin) * out_w;
    std::vector<long> cmap(out_w);
    for (std::size_t c = 0; c < in.channels(); ++c) {
        const float* src = in.data().data() + c * in.plane();
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                float* dst = col + ((c * kh + ki) * kw + kj) * ncols;
                for (std::size_t oc = 0; oc < out_w; ++oc) {
                    cmap[oc] = pad_index(static_cast<long>(oc) * s - p + static_cast<long>(kj), W,
                                         pad.mode);
                }
                for (std::size_t r = row_begin; r < row_end; ++r) {
                    float* out = dst + (r - row_begin) * out_w;
                    const long ir =
                        pad_index(static_cast<long>(r) * s - p + static_cast<long>(ki), H, pad.mode);
                    if (ir < 0) {
                        std::fill(out, out + out_w, 0.0f);
                        continue;
                    }
                    const float* row = src + ir * W;
                    for (std::size_t oc = 0; oc < out_w; ++oc) {
                        const long ic = cmap[oc];
                        out[oc] = ic < 0 ? 0.0f : row[ic];
                    }
                }
            }
        }
    }
}

// Column-buffer budget per im2col chunk, in floats.
inline constexpr std::size_t kIm2colBudget = std::size_t{1} << 22;

}  // namespace detail

/// 2-D cross-correlation of `input` with `kernel` (the deep-learning convention).
inline FeatureMap conv2d(const FeatureMap& input, const Kernel4D& kernel, std::size_t stride = 1,
                         Padding padding = Padding::none()) {
    kernel.validate();
    if (kernel.in_channels != input.channels()) {
        throw DimensionMismatch("conv2d: kernel " + kernel.shape_str() + " expects " +
                                std::to_string(kernel.in_channels) + " input channels, input is " +
                                input.shape().str());
    }
    if (stride == 0) throw InvalidArgument("conv2d: stride must be >= 1");
    const std::size_t ph = input.height() + 2 * padding.size;
    const std::size_t pw = input.width() + 2 * padding.size;
    if (kernel.k_h > ph || kernel.k_w > pw || input.height() == 0 || input.width() == 0) {
        throw DimensionMismatch("conv2d: kernel " + kernel.shape_str() +
                                " larger than padded input " + input.shape().str());
    }
    const std::size_t oh = detail::conv_out_dim(input.height(), padding.size, kernel.k_h, stride);
    const std::size_t ow = detail::conv_out_dim(input.width(), padding.size, kernel.k_w, stride);
    FeatureMap out(kernel.out_channels, oh, ow);
    const std::size_t K = kernel.filter_size();
    const std::size_t rows_per_chunk =
        std::clamp<std::size_t>(detail::kIm2colBudget / std::max<std::size_t>(K * ow, 1), 1, oh);
    std::vector<float> col(K * rows_per_chunk * ow);
    for (std::size_t r0 = 0; r0 < oh; r0 += rows_per_chunk) {
        const std::size_t r1 = std::min(oh, r0 + rows_per_chunk);
        detail::im2col_rows(input, kernel.k_h, kernel.k_w, stride, padding, ow, r0, r1, col.data());
        const std::size_t n = (r1 - r0) * ow;
        detail::sgemm(false, kernel.out_channels, n, K, kernel.data.data(), K, col.data(), n, 0.0f,
                      out.data().data() + r0 * ow, oh * ow);
    }
    if (!kernel.bias.empty()) {
        for (std::size_t o = 0; o < kernel.out_channels; ++o) {
            const float b = kernel.bias[o];
            for (float& v : out.channel(o)) v += b;
        }
    }
    return out;
}

/// Transposed convolution: scatters stride-spaced copies of the filters,
/// weighted by the input activations. Input channels index the filter bank
/// (kernel.out_channels); output has kernel.in_channels channels. Bias is
/// not applied.
inline FeatureMap conv_transpose2d(const FeatureMap& input, const Kernel4D& kernel,
                                   std::size_t stride = 1) {
    kernel.validate();
    if (kernel.out_channels != input.channels()) {
        throw DimensionMismatch("conv_transpose2d: kernel " + kernel.shape_str() + " has " +
                                std::to_string(kernel.out_channels) + " filters, input is " +
                                input.shape().str());
    }
    if (stride == 0) throw InvalidArgument("conv_transpose2d: stride must be >= 1");
    if (input.height() == 0 || input.width() == 0) {
        throw DimensionMismatch("conv_transpose2d: empty input " + input.shape().str());
    }
    const std::size_t h = input.height();
    const std::size_t w = input.width();
    const std::size_t oh = (h - 1) * stride + kernel.k_h;
    const std::size_t ow = (w - 1) * stride + kernel.k_w;
    const std::size_t K = kernel.filter_size();
    const std::size_t hw = h * w;
    std::vector<float> col(K * hw);
    // col (K x hw) = kernel^T (K x n) * input (n x hw)
    detail::sgemm(true, K, hw, kernel.out_channels, kernel.data.data(), K, input.data().data(), hw,
                  0.0f, col.data(), hw);
    FeatureMap out(kernel.in_channels, oh, ow);
    for (std::size_t c = 0; c < kernel.in_channels; ++c) {
        for (std::size_t ki = 0; ki < kernel.k_h; ++ki) {
            for (std::size_t kj = 0; kj < kernel.k_w; ++kj) {
                const float* src = col.data() + ((c * kernel.k_h + ki) * kernel.k_w + kj) * hw;
                for (std::size_t r = 0; r < h; ++r) {
                    float* dst = &out(c, r * stride + ki, kj);
                    const float* s = src + r * w;
                    for (std::size_t q = 0; q < w; ++q) dst[q * stride] += s[q];
                }
            }
        }
    }
    return out;
}

/// Max pooling with floor semantics: trailing rows/columns that do not fill a
/// window are dropped.
inline FeatureMap max_pool2d(const FeatureMap& input, std::size_t size = 2, std::size_t stride = 2) {
    if (size == 0 || stride == 0) throw InvalidArgument("max_pool2d: size and stride must be >= 1");
    if (input.height() < size || input.width() < size) {
        throw DimensionMismatch("max_pool2d: input " + input.shape().str() +
                                " smaller than window " + std::to_string(size));
    }
    const std::size_t oh = (input.height() - size) / stride + 1;
    const std::size_t ow = (input.width() - size) / stride + 1;
    FeatureMap out(input.channels(), oh, ow);
    for (std::size_t c = 0; c < input.channels(); ++c) {
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t q = 0; q < ow; ++q) {
                float m = input(c, r * stride, q * stride);
                for (std::size_t i = 0; i < size; ++i)
                    for (std::size_t j = 0; j < size; ++j)
                        m = std::max(m, input(c, r * stride + i, q * stride + j));
                out(c, r, q) = m;
            }
        }
    }
    return out;
}

inline FeatureMap upsample_nearest(const FeatureMap& input, std::size_t factor) {
    if (factor == 0) throw InvalidArgument("upsample_nearest: factor must be >= 1");
    if (factor == 1) return input;
    const std::size_t oh = input.height() * factor;
    const std::size_t ow = input.width() * factor;
    FeatureMap out(input.channels(), oh, ow);
    for (std::size_t c = 0; c < input.channels(); ++c) {
        for (std::size_t r = 0; r < oh; ++r) {
            const float* src = &input(c, r / factor, 0);
            float* dst = &out(c, r, 0);
            for (std::size_t q = 0; q < ow; ++q) dst[q] = src[q / factor];
        }
    }
    return out;
}

/// Nearest-neighbour resampling to an arbitrary size; sample index is
/// floor(i * in / out).
inline FeatureMap resample_nearest(const FeatureMap& input, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0 || input.height() == 0 || input.width() == 0) {
        throw InvalidArgument("resample_nearest: empty dimensions");
    }
    FeatureMap out(input.channels(), height, width);
    for (std::size_t c = 0; c < input.channels(); ++c)
        for (std::size_t r = 0; r < height; ++r) {
            const std::size_t sr = r * input.height() / height;
            for (std::size_t q = 0; q < width; ++q)
                out(c, r, q) = input(c, sr, q * input.width() / width);
        }
    return out;
}

inline void relu_inplace(FeatureMap& x) noexcept {
    for (float& v : x.data()) v = v > 0.0f ? v : 0.0f;
}

inline FeatureMap relu(FeatureMap x) {
    relu_inplace(x);
    return x;
}

/// Per-channel mean and population standard deviation.
inline std::vector<ChannelStats> channel_stats(const FeatureMap& input) {
    if (input.plane() == 0) throw DimensionMismatch("channel_stats: empty spatial domain");
    std::vector<ChannelStats> stats(input.channels());
    const double n = static_cast<double>(input.plane());
    for (std::size_t c = 0; c < input.channels(); ++c) {
        const auto ch = input.channel(c);
        double sum = 0.0;
        for (float v : ch) sum += v;
        const double mean = sum / n;
        double sq = 0.0;
        for (float v : ch) sq += (v - mean) * (v - mean);
        stats[c] = {mean, std::sqrt(sq / n)};
    }
    return stats;
}

/// Channel-wise concatenation [a || b].
inline FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw DimensionMismatch("concat_channels: spatial dims differ, " + a.shape().str() + " vs " +
                                b.shape().str());
    }
    std::vector<float> data;
    data.reserve(a.size() + b.size());
    data.insert(data.end(), a.values().begin(), a.values().end());
    data.insert(data.end(), b.values().begin(), b.values().end());
    return FeatureMap(a.channels() + b.channels(), a.height(), a.width(), std::move(data));
}

/// Copies rows [r0, r0+h) x cols [c0, c0+w) of every channel.
inline FeatureMap crop(const FeatureMap& x, std::size_t r0, std::size_t c0, std::size_t h,
                       std::size_t w) {
    if (r0 + h > x.height() || c0 + w > x.width()) {
        throw DimensionMismatch("crop window exceeds " + x.shape().str());
    }
    FeatureMap out(x.channels(), h, w);
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t r = 0; r < h; ++r)
            std::memcpy(&out(c, r, 0), &x(c, r0 + r, c0), w * sizeof(float));
    return out;
}

/// wx * x + wy * y elementwise.
inline FeatureMap lerp(const FeatureMap& x, const FeatureMap& y, float wx, float wy) {
    if (x.shape() != y.shape()) {
        throw DimensionMismatch("lerp: " + x.shape().str() + " vs " + y.shape().str());
    }
    FeatureMap out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = wx * x.values()[i] + wy * y.values()[i];
    return out;
}

inline bool all_finite(const FeatureMap& x) noexcept {
    return std::all_of(x.values().begin(), x.values().end(), [](float v) { return std::isfinite(v); });
}

}  // namespace texreform
