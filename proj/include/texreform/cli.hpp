#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "texreform/error.hpp"
#include "texreform/imaging.hpp"
#include "texreform/pipeline.hpp"
#include "texreform/service.hpp"
#include "texreform/weights.hpp"

namespace texreform {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitIo = 2, kExitEngine = 3 };

inline constexpr const char* kWeightsEnv = "TFR_WEIGHTS";

namespace detail {

struct CliArgs {
    std::string style, style_sem, target_sem, out;
    std::string weights;
    std::string fusion = "concat";
    std::string stages = "I,II,III";
    std::string se_scope = "global";
    std::string serve;
    std::optional<std::size_t> patch_size_global;
    double timeout = static_cast<double>(kDefaultTimeout.count());
    bool trace = false;
    std::uint64_t seed = 0;
    TransferConfig cfg;
};

inline std::filesystem::path trace_path(const std::filesystem::path& out, const char* tag) {
    auto p = out;
    p.replace_filename(out.stem().string() + "." + tag + out.extension().string());
    return p;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ImageIOError("cannot write '" + path.string() + "'");
}

// Usage problems that CLI11 cannot see (cross-field checks, env fallback).
class UsageError : public Error {
public:
    using Error::Error;
};

inline std::string resolve_weights(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kWeightsEnv); env && *env) return env;
    throw UsageError(std::string("no weights given: pass --weights or set ") + kWeightsEnv);
}

inline int run_transfer_command(const CliArgs& a, std::ostream& out, std::ostream& err) {
    TransferConfig cfg = a.cfg;
    try {
        cfg.fusion = parse_fusion(a.fusion);
        cfg.se_scope = parse_se_scope(a.se_scope);
        cfg.stages_enabled = parse_stage_list(a.stages);
        cfg.patch_size_override = a.patch_size_global;
        cfg.validate();
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    std::optional<WeightStore> weights;
    Rgb8Image style, style_sem, target_sem;
    try {
        weights.emplace(load_weights(resolve_weights(a.weights)));
        style = read_png(a.style);
        style_sem = read_png(a.style_sem);
        target_sem = read_png(a.target_sem);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }

    ImageTransfer done;
    try {
        done = transfer_images(style, style_sem, target_sem, cfg, *weights);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitEngine;
    }

    try {
        write_bytes(a.out, done.png);
        if (a.trace) {
            const StageTrace& t = done.result.trace;
            const std::pair<const char*, const std::optional<FeatureMap>*> images[] = {
                {"t5", &t.t5}, {"t4", &t.t4}, {"t3", &t.t3}, {"t2", &t.t2}};
            for (const auto& [tag, img] : images) {
                if (*img) save_image(**img, trace_path(a.out, tag));
            }
            for (std::size_t i = 0; i < kStageNames.size(); ++i) {
                if (!cfg.stages_enabled[i]) continue;
                out << "stage " << kStageNames[i] << ": " << std::fixed << std::setprecision(3) << t.seconds[i]
                    << " s\n";
            }
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}

inline int run_serve_command(const CliArgs& a, std::ostream& out, std::ostream& err) {
    std::pair<std::string, int> bind;
    std::string weights_path;
    try {
        bind = parse_bind_address(a.serve);
        weights_path = resolve_weights(a.weights);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    std::shared_ptr<const WeightStore> weights;
    try {
        weights = std::make_shared<const WeightStore>(load_weights(weights_path));
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
    ServiceOptions opts;
    opts.timeout = std::chrono::milliseconds(static_cast<long long>(a.timeout * 1000.0));
    TransferService service(weights, opts);
    httplib::Server server;
    service.bind(server);
    out << "listening on " << bind.first << ":" << bind.second << std::endl;
    if (!server.listen(bind.first, bind.second)) {
        err << "error: cannot listen on " << a.serve << "\n";
        return kExitIo;
    }
    return kExitOk;
}

}  // namespace detail

/// Command-line entry point. Returns the process exit code: 0 success,
/// 1 usage, 2 I/O, 3 engine error.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    detail::CliArgs a;
    CLI::App app{"Semantic-guided texture transfer"};
    app.name("texreform");
    app.require_subcommand(0, 1);

    app.add_option("--weights", a.weights, std::string("TFRW weight file (default: $") + kWeightsEnv + ")");
    app.add_option("--serve", a.serve, "Run the HTTP service on HOST:PORT");
    app.add_option("--timeout", a.timeout, "Per-request timeout in seconds for --serve")
        ->check(CLI::PositiveNumber);

    CLI::App* transfer = app.add_subcommand("transfer", "Run one transfer");
    transfer->fallthrough();
    transfer->add_option("--style", a.style, "Source style image (PNG)")->required();
    transfer->add_option("--style-sem", a.style_sem, "Source semantic map (PNG)")->required();
    transfer->add_option("--target-sem", a.target_sem, "Target semantic map (PNG)")->required();
    transfer->add_option("--out", a.out, "Output image (PNG)")->required();
    transfer->add_option("--omega1", a.cfg.omega1, "Semantic weight, stage I")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    transfer->add_option("--omega2", a.cfg.omega2, "Semantic weight, stage II")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    transfer->add_option("--fusion", a.fusion, "Semantic fusion")
        ->capture_default_str()
        ->check(CLI::IsMember({"concat", "add", "downsample"}));
    transfer->add_option("--patch-size", a.cfg.p_stage2, "Patch size, stage II")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    transfer->add_option("--patch-size-global", a.patch_size_global, "Patch size override, stage I")
        ->check(CLI::PositiveNumber);
    transfer->add_option("--stride", a.cfg.stride, "Patch stride")->capture_default_str()->check(CLI::PositiveNumber);
    transfer->add_option("--stages", a.stages, "Enabled stages, e.g. I,III")->capture_default_str();
    transfer->add_option("--blend1", a.cfg.blend[0], "Feature blend, stage I")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    transfer->add_option("--blend2", a.cfg.blend[1], "Feature blend, stage II")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    transfer->add_option("--blend3", a.cfg.blend[2], "Feature blend, stage III")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    transfer->add_option("--se-scope", a.se_scope, "Enhancement statistics scope")
        ->capture_default_str()
        ->check(CLI::IsMember({"global", "per-label"}));
    transfer->add_flag("--trace", a.trace, "Write intermediate images and per-stage timings");

    std::string weights_out;
    CLI::App* gen = app.add_subcommand("gen-weights", "Write a randomly initialized weight file");
    gen->add_option("--out", weights_out, "Output TFRW path")->required();
    gen->add_option("--seed", a.seed, "RNG seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (*transfer) {
        if (!a.serve.empty()) {
            err << "error: --serve cannot be combined with transfer\n";
            return kExitUsage;
        }
        return detail::run_transfer_command(a, out, err);
    }
    if (*gen) {
        try {
            export_weights(make_random_weights(a.seed), weights_out);
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
            return kExitIo;
        }
        return kExitOk;
    }
    if (!a.serve.empty()) return detail::run_serve_command(a, out, err);
    err << app.help();
    return kExitUsage;
}

}  // namespace texreform
