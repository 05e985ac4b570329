#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <png.h>

#include "texreform/enhancement.hpp"
#include "texreform/error.hpp"
#include "texreform/tensor.hpp"

namespace texreform {

/// ImageNet statistics used by the pretrained encoder.
inline constexpr std::array<float, 3> kImageMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImageStd{0.229f, 0.224f, 0.225f};

/// 8-bit interleaved RGB pixels.
struct Rgb8Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // size 3 * width * height

    Rgb8Image() = default;
    Rgb8Image(std::size_t w, std::size_t h) : width(w), height(h), pixels(3 * w * h, 0) {}

    std::uint8_t* at(std::size_t r, std::size_t c) { return pixels.data() + 3 * (r * width + c); }
    const std::uint8_t* at(std::size_t r, std::size_t c) const { return pixels.data() + 3 * (r * width + c); }

    friend bool operator==(const Rgb8Image&, const Rgb8Image&) = default;
};

namespace detail {

struct PngImage {
    png_image image{};
    PngImage() {
        image.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&image); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
};

inline Rgb8Image finish_png_read(PngImage& png) {
    if ((png.image.format & PNG_FORMAT_FLAG_COLOR) == 0) {
        throw ImageIOError("PNG is not an RGB image (grayscale is not supported)");
    }
    png.image.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(png.image));
    if (!png_image_finish_read(&png.image, nullptr, rgba.data(), 0, nullptr)) {
        throw ImageIOError(std::string("PNG decode failed: ") + png.image.message);
    }
    Rgb8Image out(png.image.width, png.image.height);
    for (std::size_t i = 0; i < out.width * out.height; ++i) {
        out.pixels[3 * i + 0] = rgba[4 * i + 0];
        out.pixels[3 * i + 1] = rgba[4 * i + 1];
        out.pixels[3 * i + 2] = rgba[4 * i + 2];
    }
    return out;
}

}  // namespace detail

inline Rgb8Image decode_png(const std::vector<std::uint8_t>& bytes) {
    detail::PngImage png;
    if (bytes.empty() || !png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size())) {
        throw ImageIOError(std::string("PNG decode failed: ") +
                           (bytes.empty() ? "empty buffer" : png.image.message));
    }
    return detail::finish_png_read(png);
}

inline Rgb8Image read_png(const std::filesystem::path& path) {
    detail::PngImage png;
    if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
        throw ImageIOError("cannot read PNG '" + path.string() + "': " + png.image.message);
    }
    return detail::finish_png_read(png);
}

inline std::vector<std::uint8_t> encode_png(const Rgb8Image& img) {
    detail::PngImage png;
    png.image.width = static_cast<png_uint_32>(img.width);
    png.image.height = static_cast<png_uint_32>(img.height);
    png.image.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png.image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
        throw ImageIOError(std::string("PNG encode failed: ") + png.image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
        throw ImageIOError(std::string("PNG encode failed: ") + png.image.message);
    }
    out.resize(size);
    return out;
}

inline void write_png(const Rgb8Image& img, const std::filesystem::path& path) {
    const auto bytes = encode_png(img);
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ImageIOError("cannot write PNG '" + path.string() + "'");
}

/// 8-bit RGB to a normalized 3xHxW map: (v / 255 - mean) / std per channel.
inline FeatureMap normalize(const Rgb8Image& img) {
    FeatureMap out(3, img.height, img.width);
    for (std::size_t c = 0; c < 3; ++c) {
        auto dst = out.channel(c);
        for (std::size_t i = 0; i < img.width * img.height; ++i) {
            dst[i] = (static_cast<float>(img.pixels[3 * i + c]) / 255.0f - kImageMean[c]) / kImageStd[c];
        }
    }
    return out;
}

/// Inverse of normalize, clamped to [0, 1] and rounded to 8 bits.
inline Rgb8Image denormalize(const FeatureMap& feature) {
    if (feature.channels() != 3) {
        throw DimensionMismatch("expected a 3-channel image, got " + feature.shape().str());
    }
    Rgb8Image out(feature.width(), feature.height());
    for (std::size_t c = 0; c < 3; ++c) {
        const auto src = feature.channel(c);
        for (std::size_t i = 0; i < src.size(); ++i) {
            const float v = std::clamp(src[i] * kImageStd[c] + kImageMean[c], 0.0f, 1.0f);
            out.pixels[3 * i + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
    }
    return out;
}

inline FeatureMap load_image(const std::filesystem::path& path) { return normalize(read_png(path)); }

inline void save_image(const FeatureMap& feature, const std::filesystem::path& path) {
    write_png(denormalize(feature), path);
}

namespace detail {

inline void check_multiple(std::size_t multiple, std::size_t h, std::size_t w) {
    if (multiple == 0 || multiple > 16 || (multiple & (multiple - 1)) != 0) {
        throw InvalidArgument("alignment multiple must be a power of two <= 16, got " + std::to_string(multiple));
    }
    if (h < multiple || w < multiple) {
        throw DimensionMismatch("image " + std::to_string(h) + "x" + std::to_string(w) +
                                " is smaller than alignment multiple " + std::to_string(multiple));
    }
}

}  // namespace detail

/// Center-crops to the largest dims divisible by `multiple`; offsets are
/// floor((dim mod multiple) / 2).
inline FeatureMap align_dims(const FeatureMap& image, std::size_t multiple) {
    detail::check_multiple(multiple, image.height(), image.width());
    const std::size_t h = image.height() - image.height() % multiple;
    const std::size_t w = image.width() - image.width() % multiple;
    if (h == image.height() && w == image.width()) return image;
    return crop(image, (image.height() % multiple) / 2, (image.width() % multiple) / 2, h, w);
}

inline Rgb8Image align_dims(const Rgb8Image& image, std::size_t multiple) {
    detail::check_multiple(multiple, image.height, image.width);
    const std::size_t h = image.height - image.height % multiple;
    const std::size_t w = image.width - image.width % multiple;
    const std::size_t r0 = (image.height % multiple) / 2;
    const std::size_t c0 = (image.width % multiple) / 2;
    Rgb8Image out(w, h);
    for (std::size_t r = 0; r < h; ++r) std::copy_n(image.at(r0 + r, c0), 3 * w, out.at(r, 0));
    return out;
}

// ---------------------------------------------------------------------------
// Semantic maps

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr std::size_t kMaxLabels = 64;
inline constexpr double kDefaultSnapTolerance = 16.0 / 255.0;

struct SemanticMap {
    LabelGrid grid;
    std::vector<Rgb> palette;  // label id -> color, lexicographic order

    std::size_t label_count() const noexcept { return palette.size(); }
};

namespace detail {

inline double color_distance(const Rgb& a, const Rgb& b) {
    double d = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double x = (static_cast<double>(a[i]) - b[i]) / 255.0;
        d += x * x;
    }
    return std::sqrt(d);
}

inline std::size_t nearest_color(const Rgb& c, const std::vector<Rgb>& palette) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < palette.size(); ++i) {
        const double d = color_distance(c, palette[i]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

}  // namespace detail

/// Labels every pixel with its nearest palette color.
inline LabelGrid assign_labels(const Rgb8Image& image, const std::vector<Rgb>& palette) {
    if (palette.empty()) throw InvalidArgument("assign_labels: empty palette");
    LabelGrid grid{image.height, image.width, std::vector<std::uint16_t>(image.width * image.height)};
    std::map<Rgb, std::uint16_t> cache;
    for (std::size_t i = 0; i < grid.labels.size(); ++i) {
        const Rgb c{image.pixels[3 * i], image.pixels[3 * i + 1], image.pixels[3 * i + 2]};
        auto it = cache.find(c);
        if (it == cache.end()) {
            it = cache.emplace(c, static_cast<std::uint16_t>(detail::nearest_color(c, palette))).first;
        }
        grid.labels[i] = it->second;
    }
    return grid;
}

/// Builds a palette by clustering the colors of one or more images.
///
/// Colors are visited from most to least frequent; a color within
/// `tolerance` (Euclidean distance in unit RGB) of an existing palette entry
/// snaps to it, otherwise it opens a new entry. The palette is returned in
/// lexicographic RGB order.
inline std::vector<Rgb> build_palette(const std::vector<const Rgb8Image*>& images,
                                      double tolerance = kDefaultSnapTolerance) {
    std::map<Rgb, std::size_t> histogram;
    for (const Rgb8Image* image : images) {
        if (image->width == 0 || image->height == 0) throw InvalidArgument("semantic map is empty");
        for (std::size_t i = 0; i < image->width * image->height; ++i) {
            ++histogram[{image->pixels[3 * i], image->pixels[3 * i + 1], image->pixels[3 * i + 2]}];
        }
    }
    std::vector<std::pair<Rgb, std::size_t>> colors(histogram.begin(), histogram.end());
    std::stable_sort(colors.begin(), colors.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<Rgb> centers;
    for (const auto& [color, count] : colors) {
        const bool snapped = std::any_of(centers.begin(), centers.end(), [&](const Rgb& center) {
            return detail::color_distance(color, center) <= tolerance;
        });
        if (snapped) continue;
        centers.push_back(color);
        if (centers.size() > kMaxLabels) {
            throw TooManyLabels("semantic map has more than " + std::to_string(kMaxLabels) +
                                " distinct color clusters");
        }
    }
    std::sort(centers.begin(), centers.end());
    return centers;
}

inline SemanticMap parse_semantic_map(const Rgb8Image& image, double tolerance = kDefaultSnapTolerance) {
    SemanticMap map;
    map.palette = build_palette({&image}, tolerance);
    map.grid = assign_labels(image, map.palette);
    return map;
}

inline Rgb8Image render_semantic_map(const SemanticMap& map) {
    Rgb8Image out(map.grid.width, map.grid.height);
    for (std::size_t i = 0; i < map.grid.labels.size(); ++i) {
        const Rgb& c = map.palette.at(map.grid.labels[i]);
        std::copy(c.begin(), c.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i));
    }
    return out;
}

}  // namespace texreform
