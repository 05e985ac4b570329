#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "texreform/error.hpp"

namespace texreform {

inline constexpr int kMinLevel = 1;
inline constexpr int kMaxLevel = 5;

enum class LayerKind { conv, pool, upsample };

/// One step of an encoder or decoder. Convolutions are 3x3 with reflection
/// padding 1; `relu` says whether a ReLU follows.
struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    std::string name;  // tensor prefix, e.g. "enc.conv3_1" or "dec3.conv0"
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    bool relu = false;
};

namespace detail {

struct VggConv {
    const char* name;
    std::size_t in;
    std::size_t out;
    int block;
};

// VGG-19 convolutions up to conv5_1, in forward order.
inline constexpr std::array<VggConv, 13> kVggPrefix{{
    {"conv1_1", 3, 64, 1},     {"conv1_2", 64, 64, 1},    {"conv2_1", 64, 128, 2},
    {"conv2_2", 128, 128, 2},  {"conv3_1", 128, 256, 3},  {"conv3_2", 256, 256, 3},
    {"conv3_3", 256, 256, 3},  {"conv3_4", 256, 256, 3},  {"conv4_1", 256, 512, 4},
    {"conv4_2", 512, 512, 4},  {"conv4_3", 512, 512, 4},  {"conv4_4", 512, 512, 4},
    {"conv5_1", 512, 512, 5},
}};

inline void check_level(int level) {
    if (level < kMinLevel || level > kMaxLevel) {
        throw InvalidArgument("codec level must be in 1..5, got " + std::to_string(level));
    }
}

}  // namespace detail

/// Encoder slice up to relu{level}_1.
inline std::vector<LayerSpec> encoder_layers(int level) {
    detail::check_level(level);
    std::vector<LayerSpec> layers;
    int block = 1;
    for (const auto& c : detail::kVggPrefix) {
        if (c.block != block) {
            layers.push_back({LayerKind::pool, {}, 0, 0, false});
            block = c.block;
        }
        layers.push_back({LayerKind::conv, std::string("enc.") + c.name, c.in, c.out, true});
        if (c.block == level) break;
    }
    return layers;
}

/// Mirror of the encoder slice: pools become x2 nearest upsampling, convs are
/// reversed in order and channel direction, and the final 3-channel conv has
/// no activation.
inline std::vector<LayerSpec> decoder_layers(int level) {
    const auto enc = encoder_layers(level);
    std::vector<LayerSpec> layers;
    int conv_index = 0;
    const std::string prefix = "dec" + std::to_string(level) + ".conv";
    for (auto it = enc.rbegin(); it != enc.rend(); ++it) {
        if (it->kind == LayerKind::pool) {
            layers.push_back({LayerKind::upsample, {}, 0, 0, false});
        } else {
            layers.push_back({LayerKind::conv, prefix + std::to_string(conv_index++), it->out_channels,
                              it->in_channels, true});
        }
    }
    layers.back().relu = false;
    return layers;
}

/// Channel count of relu{level}_1.
inline std::size_t level_channels(int level) {
    detail::check_level(level);
    static constexpr std::array<std::size_t, 5> kChannels{64, 128, 256, 512, 512};
    return kChannels[static_cast<std::size_t>(level - 1)];
}

/// Spatial downsampling factor of relu{level}_1.
inline std::size_t level_factor(int level) {
    detail::check_level(level);
    return std::size_t{1} << (level - 1);
}

/// Every conv layer (encoder prefix and the five decoders) a complete weight
/// file must provide.
inline std::vector<LayerSpec> all_conv_layers() {
    std::vector<LayerSpec> out;
    for (const auto& l : encoder_layers(kMaxLevel)) {
        if (l.kind == LayerKind::conv) out.push_back(l);
    }
    for (int level = kMinLevel; level <= kMaxLevel; ++level) {
        for (const auto& l : decoder_layers(level)) {
            if (l.kind == LayerKind::conv) out.push_back(l);
        }
    }
    return out;
}

}  // namespace texreform
