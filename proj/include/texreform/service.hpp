#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "texreform/error.hpp"
#include "texreform/imaging.hpp"
#include "texreform/pipeline.hpp"
#include "texreform/weights.hpp"

namespace texreform {

using json = nlohmann::json;

inline constexpr std::size_t kMaxRequestBytes = std::size_t{16} << 20;
inline constexpr std::chrono::seconds kDefaultTimeout{300};

// ---------------------------------------------------------------------------
// Base64

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
    // Accept data URLs as produced by browsers' canvas.toDataURL().
    if (text.substr(0, 5) == "data:") {
        const auto comma = text.find(',');
        if (comma == std::string_view::npos) throw InvalidArgument("malformed data URL");
        text.remove_prefix(comma + 1);
    }
    std::string clean;
    clean.reserve(text.size());
    for (char ch : text) {
        if (ch != '\n' && ch != '\r' && ch != ' ') clean.push_back(ch);
    }
    if (clean.size() % 4 != 0) throw InvalidArgument("base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out(clean.size() / 4 * 3);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                  static_cast<int>(clean.size()));
    if (n < 0) throw InvalidArgument("invalid base64 payload");
    std::size_t size = static_cast<std::size_t>(n);
    // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
    if (!clean.empty() && clean.back() == '=') --size;
    if (clean.size() > 1 && clean[clean.size() - 2] == '=') --size;
    out.resize(size);
    return out;
}

// ---------------------------------------------------------------------------
// Config <-> text

inline FusionVariant parse_fusion(std::string_view s) {
    if (s == "concat") return FusionVariant::concat;
    if (s == "add") return FusionVariant::add;
    if (s == "downsample") return FusionVariant::downsample;
    throw InvalidArgument("unknown fusion '" + std::string(s) + "' (expected concat, add or downsample)");
}

inline EnhancementVariant parse_se_scope(std::string_view s) {
    if (s == "global") return EnhancementVariant::global;
    if (s == "per-label") return EnhancementVariant::per_label;
    throw InvalidArgument("unknown se scope '" + std::string(s) + "' (expected global or per-label)");
}

inline const char* to_string(EnhancementVariant v) {
    return v == EnhancementVariant::global ? "global" : "per-label";
}

/// Parses a comma-separated stage list such as "I,III". An empty list
/// disables every stage.
inline std::array<bool, 3> parse_stage_list(std::string_view list) {
    std::array<bool, 3> enabled{false, false, false};
    std::size_t pos = 0;
    while (pos <= list.size()) {
        const std::size_t end = std::min(list.find(',', pos), list.size());
        std::string item(list.substr(pos, end - pos));
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (!item.empty()) {
            bool found = false;
            for (std::size_t i = 0; i < kStageNames.size(); ++i) {
                if (item == kStageNames[i]) {
                    enabled[i] = true;
                    found = true;
                }
            }
            if (!found) throw InvalidArgument("unknown stage '" + item + "' (expected I, II or III)");
        }
        pos = end + 1;
    }
    return enabled;
}

inline json config_to_json(const TransferConfig& cfg) {
    json j;
    j["omega1"] = cfg.omega1;
    j["omega2"] = cfg.omega2;
    j["fusion"] = to_string(cfg.fusion);
    j["p_stage2"] = cfg.p_stage2;
    j["stride"] = cfg.stride;
    j["stages_enabled"] = cfg.stages_enabled;
    j["blend"] = cfg.blend;
    j["se_scope"] = to_string(cfg.se_scope);
    j["patch_size_override"] = cfg.patch_size_override ? json(*cfg.patch_size_override) : json(nullptr);
    j["snap_tolerance"] = cfg.snap_tolerance;
    return j;
}

namespace detail {

inline double json_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw InvalidArgument("config." + key + " must be a number");
    return v.get<double>();
}

inline std::size_t json_count(const json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
        throw InvalidArgument("config." + key + " must be a positive integer");
    }
    return v.get<std::size_t>();
}

}  // namespace detail

/// Applies the fields of `overrides` to `cfg` and validates the result.
/// Unknown keys are rejected.
inline TransferConfig apply_overrides(TransferConfig cfg, const json& overrides) {
    if (overrides.is_null()) return cfg;
    if (!overrides.is_object()) throw InvalidArgument("config must be a JSON object");
    for (const auto& [key, v] : overrides.items()) {
        if (key == "omega1") {
            cfg.omega1 = detail::json_number(v, key);
        } else if (key == "omega2") {
            cfg.omega2 = detail::json_number(v, key);
        } else if (key == "fusion") {
            if (!v.is_string()) throw InvalidArgument("config.fusion must be a string");
            cfg.fusion = parse_fusion(v.get<std::string>());
        } else if (key == "p_stage2") {
            cfg.p_stage2 = detail::json_count(v, key);
        } else if (key == "stride") {
            cfg.stride = detail::json_count(v, key);
        } else if (key == "stages_enabled") {
            if (v.is_string()) {
                cfg.stages_enabled = parse_stage_list(v.get<std::string>());
            } else if (v.is_array() && v.size() == 3 && std::all_of(v.begin(), v.end(), [](const json& b) {
                           return b.is_boolean();
                       })) {
                for (std::size_t i = 0; i < 3; ++i) cfg.stages_enabled[i] = v[i].get<bool>();
            } else {
                throw InvalidArgument("config.stages_enabled must be three booleans or a stage list");
            }
        } else if (key == "blend") {
            if (!v.is_array() || v.size() != 3) throw InvalidArgument("config.blend must hold three numbers");
            for (std::size_t i = 0; i < 3; ++i) cfg.blend[i] = detail::json_number(v[i], key);
        } else if (key == "se_scope") {
            if (!v.is_string()) throw InvalidArgument("config.se_scope must be a string");
            cfg.se_scope = parse_se_scope(v.get<std::string>());
        } else if (key == "patch_size_override") {
            cfg.patch_size_override =
                v.is_null() ? std::nullopt : std::optional<std::size_t>(detail::json_count(v, key));
        } else if (key == "snap_tolerance") {
            cfg.snap_tolerance = detail::json_number(v, key);
        } else {
            throw InvalidArgument("unknown config field '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Shared transfer entry point (CLI and HTTP use the same byte path)

struct ImageTransfer {
    std::vector<std::uint8_t> png;
    TransferResult result;
};

inline ImageTransfer transfer_images(const Rgb8Image& style, const Rgb8Image& style_sem, const Rgb8Image& target_sem,
                                     const TransferConfig& cfg, const WeightStore& w, const RunOptions& opts = {}) {
    ImageTransfer out;
    out.result = run_transfer(prepare_inputs(style, style_sem, target_sem), cfg, w, opts);
    out.png = encode_png(denormalize(out.result.image));
    return out;
}

// ---------------------------------------------------------------------------
// HTTP service

struct HttpReply {
    int status = 200;
    std::string body;

    json parsed() const { return json::parse(body); }
};

struct ServiceOptions {
    std::chrono::milliseconds timeout = kDefaultTimeout;
    std::size_t max_request_bytes = kMaxRequestBytes;
};

/// Request handlers over one shared, read-only WeightStore. The handlers are
/// plain functions of the request body so they can be exercised without a
/// socket; bind() mounts them on an httplib server.
class TransferService {
public:
    explicit TransferService(std::shared_ptr<const WeightStore> weights, ServiceOptions options = {})
        : weights_(std::move(weights)), options_(options) {
        if (!weights_) throw InvalidArgument("service needs a weight store");
    }

    const ServiceOptions& options() const noexcept { return options_; }

    HttpReply health() const {
        return {200, json{{"status", "ok"}, {"weights_version", weights_->version()}}.dump()};
    }

    HttpReply config_defaults() const { return {200, config_to_json(TransferConfig{}).dump()}; }

    HttpReply transfer(std::string_view body) const {
        if (body.size() > options_.max_request_bytes) {
            return error(413, "request body exceeds " + std::to_string(options_.max_request_bytes) + " bytes");
        }
        json req;
        try {
            req = json::parse(body);
        } catch (const json::exception& e) {
            return error(400, std::string("malformed JSON: ") + e.what());
        }
        if (!req.is_object()) return error(400, "request must be a JSON object");

        TransferConfig cfg;
        Rgb8Image images[3];
        bool want_trace = false;
        try {
            static constexpr const char* kFields[3] = {"source_style", "source_sem", "target_sem"};
            for (int i = 0; i < 3; ++i) {
                const auto it = req.find(kFields[i]);
                if (it == req.end() || !it->is_string()) {
                    throw InvalidArgument(std::string("missing image field '") + kFields[i] + "'");
                }
                try {
                    images[i] = decode_png(base64_decode(it->get<std::string>()));
                } catch (const Error& e) {
                    throw InvalidArgument(std::string(kFields[i]) + ": " + e.what());
                }
            }
            if (const auto it = req.find("config"); it != req.end()) cfg = apply_overrides(cfg, *it);
            if (const auto it = req.find("trace"); it != req.end()) {
                if (!it->is_boolean()) throw InvalidArgument("trace must be a boolean");
                want_trace = it->get<bool>();
            }
        } catch (const Error& e) {
            return error(400, e.what());
        }

        const RunOptions run{std::chrono::steady_clock::now() + options_.timeout};
        try {
            const ImageTransfer done = transfer_images(images[0], images[1], images[2], cfg, *weights_, run);
            json reply;
            reply["image"] = base64_encode(done.png);
            reply["timings"] = timings_json(done.result.trace);
            if (want_trace) reply["trace"] = trace_json(done.result.trace);
            return {200, reply.dump()};
        } catch (const DeadlineExceeded& e) {
            return error(504, e.what());
        } catch (const StageError& e) {
            return error(422, e.what(), e.stage());
        } catch (const Error& e) {
            return error(422, e.what(), "unknown");
        }
    }

    /// Mounts the endpoints on `server`.
    void bind(httplib::Server& server) const {
        server.set_payload_max_length(options_.max_request_bytes);
        auto reply = [](httplib::Response& res, const HttpReply& r) {
            res.status = r.status;
            res.set_content(r.body, "application/json");
        };
        server.Get("/v1/health", [this, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, health());
        });
        server.Get("/v1/config/defaults", [this, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, config_defaults());
        });
        server.Post("/v1/transfer", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, transfer(req.body));
        });
        // The browser UI may be served from another origin.
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) {
                res.set_content(json{{"error", httplib::status_message(res.status)}}.dump(), "application/json");
            }
        });
    }

    static json timings_json(const StageTrace& trace) {
        json t = json::object();
        for (std::size_t i = 0; i < kStageNames.size(); ++i) t[kStageNames[i]] = trace.seconds[i];
        return t;
    }

    static json trace_json(const StageTrace& trace) {
        json t = json::object();
        auto put = [&](const char* key, const std::optional<FeatureMap>& img) {
            if (img) t[key] = base64_encode(encode_png(denormalize(*img)));
        };
        put("t5", trace.t5);
        put("t4", trace.t4);
        put("t3", trace.t3);
        put("t2", trace.t2);
        put("final", trace.final_image);
        if (trace.stage1_matches) {
            t["stage1_patch_size"] = trace.stage1_patch_size;
            t["stage1_patch_count"] = trace.stage1_patch_count;
        }
        if (trace.stage2_matches) t["stage2_patch_count"] = trace.stage2_patch_count;
        return t;
    }

private:
    static HttpReply error(int status, const std::string& message, const std::string& stage = {}) {
        json j{{"error", message}};
        if (!stage.empty()) j["stage"] = stage;
        return {status, j.dump()};
    }

    std::shared_ptr<const WeightStore> weights_;
    ServiceOptions options_;
};

/// Splits "host:port" (IPv4 or hostname). A bare port binds 127.0.0.1.
inline std::pair<std::string, int> parse_bind_address(std::string_view addr) {
    const auto colon = addr.rfind(':');
    std::string host = colon == std::string_view::npos ? "127.0.0.1" : std::string(addr.substr(0, colon));
    const std::string port_text(colon == std::string_view::npos ? addr : addr.substr(colon + 1));
    if (host.empty()) host = "0.0.0.0";
    int port = -1;
    try {
        std::size_t used = 0;
        port = std::stoi(port_text, &used);
        if (used != port_text.size()) port = -1;
    } catch (const std::exception&) {
        port = -1;
    }
    if (port < 0 || port > 65535) throw InvalidArgument("bad bind address '" + std::string(addr) + "'");
    return {host, port};
}

}  // namespace texreform
