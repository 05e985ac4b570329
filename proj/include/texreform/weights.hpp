#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "texreform/architecture.hpp"
#include "texreform/error.hpp"
#include "texreform/tensor.hpp"

namespace texreform {

inline constexpr char kWeightMagic[4] = {'T', 'F', 'R', 'W'};
inline constexpr std::uint32_t kWeightVersion = 1;

/// Generic named tensor as stored in a weight file.
struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<float> values;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Read-only view of a stored tensor.
struct TensorView {
    std::vector<std::uint64_t> dims;
    std::span<const float> values;
};

/// Immutable collection of the encoder and decoder parameters.
///
/// Convolution weights and biases are kept as ready-to-use Kernel4D objects;
/// any other tensors (metadata such as "meta.preproc") are kept verbatim.
class WeightStore {
public:
    /// Validates the complete architecture and takes ownership of the tensors.
    static WeightStore from_tensors(std::map<std::string, Tensor> tensors,
                                    std::uint32_t version = kWeightVersion) {
        WeightStore store;
        store.version_ = version;
        for (const auto& spec : all_conv_layers()) {
            const std::string wname = spec.name + ".weight";
            const std::string bname = spec.name + ".bias";
            auto wit = tensors.find(wname);
            if (wit == tensors.end()) throw MissingTensor(wname);
            auto bit = tensors.find(bname);
            if (bit == tensors.end()) throw MissingTensor(bname);
            const std::vector<std::uint64_t> wdims{spec.out_channels, spec.in_channels, 3, 3};
            if (wit->second.dims != wdims) {
                throw ShapeMismatch("tensor '" + wname + "' has shape " + dims_str(wit->second.dims) +
                                    ", expected " + dims_str(wdims));
            }
            if (bit->second.dims != std::vector<std::uint64_t>{spec.out_channels}) {
                throw ShapeMismatch("tensor '" + bname + "' has shape " + dims_str(bit->second.dims) +
                                    ", expected [" + std::to_string(spec.out_channels) + "]");
            }
            Kernel4D k;
            k.out_channels = spec.out_channels;
            k.in_channels = spec.in_channels;
            k.k_h = 3;
            k.k_w = 3;
            k.data = std::move(wit->second.values);
            k.bias = std::move(bit->second.values);
            tensors.erase(wit);
            tensors.erase(bname);
            store.layers_.emplace(spec.name, std::move(k));
        }
        auto meta = tensors.find("meta.preproc");
        if (meta == tensors.end()) throw MissingTensor("meta.preproc");
        if (meta->second.values.size() != 1 || meta->second.values[0] != 0.0f) {
            throw BadFormat("unsupported preprocessing convention in 'meta.preproc'");
        }
        store.extras_ = std::move(tensors);
        return store;
    }

    std::uint32_t version() const noexcept { return version_; }

    /// Conv layer by prefix, e.g. "enc.conv1_1" or "dec4.conv0".
    const Kernel4D& layer(const std::string& name) const {
        auto it = layers_.find(name);
        if (it == layers_.end()) throw MissingTensor(name + ".weight");
        return it->second;
    }

    std::optional<TensorView> find(const std::string& name) const {
        if (auto it = extras_.find(name); it != extras_.end()) {
            return TensorView{it->second.dims, it->second.values};
        }
        const auto dot = name.rfind('.');
        if (dot == std::string::npos) return std::nullopt;
        auto it = layers_.find(name.substr(0, dot));
        if (it == layers_.end()) return std::nullopt;
        const Kernel4D& k = it->second;
        const std::string field = name.substr(dot + 1);
        if (field == "weight") return TensorView{{k.out_channels, k.in_channels, k.k_h, k.k_w}, k.data};
        if (field == "bias") return TensorView{{k.out_channels}, k.bias};
        return std::nullopt;
    }

    std::vector<std::string> tensor_names() const {
        std::vector<std::string> names;
        for (const auto& [name, k] : layers_) {
            names.push_back(name + ".weight");
            names.push_back(name + ".bias");
        }
        for (const auto& [name, t] : extras_) names.push_back(name);
        std::sort(names.begin(), names.end());
        return names;
    }

    /// True for stores made by make_random_weights (tagged "meta.random").
    bool is_random() const {
        auto t = find("meta.random");
        return t && !t->values.empty() && t->values[0] != 0.0f;
    }

    static std::string dims_str(const std::vector<std::uint64_t>& dims) {
        std::string s = "[";
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(dims[i]);
        }
        return s + "]";
    }

private:
    WeightStore() = default;

    std::uint32_t version_ = kWeightVersion;
    std::map<std::string, Kernel4D> layers_;
    std::map<std::string, Tensor> extras_;
};

namespace detail {

template <typename T>
T to_little(T v) noexcept {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

class WeightReader {
public:
    explicit WeightReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
        if (!in_) throw WeightFileError("cannot open weight file '" + path.string() + "'");
    }

    void bytes(void* dst, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw TruncatedPayload(std::string("weight file truncated while reading ") + what);
        }
    }

    template <typename T>
    T scalar(const char* what) {
        T v{};
        bytes(&v, sizeof(T), what);
        return to_little(v);
    }

private:
    std::ifstream in_;
};

class WeightWriter {
public:
    explicit WeightWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw WeightFileError("cannot create weight file '" + path.string() + "'");
    }

    void bytes(const void* src, std::size_t n) {
        out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
    }

    template <typename T>
    void scalar(T v) {
        v = to_little(v);
        bytes(&v, sizeof(T));
    }

    void floats(std::span<const float> values) {
        if constexpr (std::endian::native == std::endian::little) {
            bytes(values.data(), values.size_bytes());
        } else {
            for (float v : values) scalar(v);
        }
    }

    void finish(const std::filesystem::path& path) {
        out_.flush();
        if (!out_) throw WeightFileError("failed writing weight file '" + path.string() + "'");
    }

private:
    std::ofstream out_;
};

}  // namespace detail

/// Reads a TFRW file into a raw tensor map without architecture checks.
inline std::map<std::string, Tensor> read_tensor_file(const std::filesystem::path& path,
                                                      std::uint32_t* version_out = nullptr) {
    detail::WeightReader r(path);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kWeightMagic, 4) != 0) throw BadFormat("bad magic, not a TFRW weight file");
    const auto version = r.scalar<std::uint32_t>("version");
    if (version != kWeightVersion) {
        throw BadFormat("unsupported weight file version " + std::to_string(version));
    }
    if (version_out) *version_out = version;
    const auto count = r.scalar<std::uint32_t>("tensor count");
    std::map<std::string, Tensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.scalar<std::uint32_t>("name length");
        if (name_len > 4096) throw BadFormat("implausible tensor name length");
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len, "tensor name");
        const auto dtype = r.scalar<std::uint8_t>("dtype");
        if (dtype != 0) throw BadFormat("tensor '" + name + "' has unsupported dtype " + std::to_string(dtype));
        const auto ndim = r.scalar<std::uint8_t>("ndim");
        Tensor t;
        std::uint64_t count_elems = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            t.dims.push_back(r.scalar<std::uint64_t>("dims"));
            count_elems *= t.dims.back();
        }
        if (count_elems > (std::uint64_t{1} << 32)) throw BadFormat("tensor '" + name + "' is implausibly large");
        t.values.resize(count_elems);
        r.bytes(t.values.data(), count_elems * sizeof(float), "tensor payload");
        if constexpr (std::endian::native == std::endian::big) {
            for (float& v : t.values) v = detail::to_little(v);
        }
        tensors[name] = std::move(t);
    }
    return tensors;
}

/// Writes raw tensors in TFRW format, sorted by name.
inline void write_tensor_file(const std::filesystem::path& path,
                              const std::vector<std::pair<std::string, TensorView>>& tensors) {
    detail::WeightWriter w(path);
    w.bytes(kWeightMagic, 4);
    w.scalar<std::uint32_t>(kWeightVersion);
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, view] : tensors) {
        w.scalar<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.scalar<std::uint8_t>(0);
        w.scalar<std::uint8_t>(static_cast<std::uint8_t>(view.dims.size()));
        for (auto d : view.dims) w.scalar<std::uint64_t>(d);
        w.floats(view.values);
    }
    w.finish(path);
}

inline WeightStore load_weights(const std::filesystem::path& path) {
    std::uint32_t version = 0;
    auto tensors = read_tensor_file(path, &version);
    return WeightStore::from_tensors(std::move(tensors), version);
}

inline void export_weights(const WeightStore& store, const std::filesystem::path& path) {
    std::vector<std::pair<std::string, TensorView>> list;
    for (const auto& name : store.tensor_names()) list.emplace_back(name, *store.find(name));
    write_tensor_file(path, list);
}

/// Deterministic He-uniform weights for every tensor of the architecture.
/// The store is tagged "meta.random" so it is never mistaken for a trained
/// artifact.
inline std::map<std::string, Tensor> random_weight_tensors(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::map<std::string, Tensor> tensors;
    for (const auto& spec : all_conv_layers()) {
        const std::size_t fan_in = spec.in_channels * 9;
        const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
        std::uniform_real_distribution<float> wdist(-limit, limit);
        std::uniform_real_distribution<float> bdist(-0.01f, 0.01f);
        Tensor w{{spec.out_channels, spec.in_channels, 3, 3}, {}};
        w.values.resize(spec.out_channels * fan_in);
        for (float& v : w.values) v = wdist(rng);
        Tensor b{{spec.out_channels}, std::vector<float>(spec.out_channels)};
        for (float& v : b.values) v = bdist(rng);
        tensors[spec.name + ".weight"] = std::move(w);
        tensors[spec.name + ".bias"] = std::move(b);
    }
    tensors["meta.preproc"] = Tensor{{1}, {0.0f}};
    tensors["meta.random"] = Tensor{{1}, {1.0f}};
    return tensors;
}

inline WeightStore make_random_weights(std::uint64_t seed = 0) {
    return WeightStore::from_tensors(random_weight_tensors(seed));
}

}  // namespace texreform
