#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "texreform/codec.hpp"
#include "texreform/enhancement.hpp"
#include "texreform/error.hpp"
#include "texreform/imaging.hpp"
#include "texreform/vstr.hpp"
#include "texreform/weights.hpp"

namespace texreform {

enum class Stage : std::size_t { global_align = 0, local_refine = 1, enhance = 2 };

inline constexpr std::array<const char*, 3> kStageNames{"I", "II", "III"};

inline const char* stage_name(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

/// All tuning knobs of a transfer run.
struct TransferConfig {
    double omega1 = 50.0;
    double omega2 = 50.0;
    FusionVariant fusion = FusionVariant::concat;
    std::size_t p_stage2 = 3;
    std::size_t stride = 1;
    std::array<bool, 3> stages_enabled{true, true, true};
    /// Feature interpolation per stage: out = blend * F_out + (1 - blend) * F_in.
    std::array<double, 3> blend{1.0, 1.0, 1.0};
    EnhancementVariant se_scope = EnhancementVariant::global;
    std::optional<std::size_t> patch_size_override;  // stage I
    double snap_tolerance = kDefaultSnapTolerance;

    bool enabled(Stage s) const { return stages_enabled[static_cast<std::size_t>(s)]; }

    void validate() const {
        auto check = [](bool ok, const std::string& what) {
            if (!ok) throw InvalidArgument(what);
        };
        check(std::isfinite(omega1) && omega1 >= 0.0, "omega1 must be >= 0");
        check(std::isfinite(omega2) && omega2 >= 0.0, "omega2 must be >= 0");
        check(p_stage2 >= 1, "patch size must be >= 1");
        check(stride >= 1, "stride must be >= 1");
        check(!patch_size_override || *patch_size_override >= 1, "global patch size must be >= 1");
        for (std::size_t i = 0; i < blend.size(); ++i) {
            check(std::isfinite(blend[i]) && blend[i] >= 0.0 && blend[i] <= 1.0,
                  std::string("blend for stage ") + kStageNames[i] + " must be in [0, 1]");
        }
        check(std::isfinite(snap_tolerance) && snap_tolerance >= 0.0, "snap tolerance must be >= 0");
    }
};

/// Intermediate images and timings of one run.
struct StageTrace {
    std::optional<FeatureMap> t5;  // after stage I
    std::optional<FeatureMap> t4;  // after stage II
    std::optional<FeatureMap> t3;  // after enhancement at relu3_1
    std::optional<FeatureMap> t2;  // after enhancement at relu2_1
    std::optional<FeatureMap> final_image;
    std::array<double, 3> seconds{0.0, 0.0, 0.0};
    std::optional<MatchMap> stage1_matches;
    std::optional<MatchMap> stage2_matches;
    std::size_t stage1_patch_size = 0;
    std::size_t stage1_patch_count = 0;
    std::size_t stage2_patch_count = 0;
};

/// Normalized 3xHxW images.
struct TransferInputs {
    FeatureMap style;
    FeatureMap style_sem;
    FeatureMap target_sem;
};

struct TransferResult {
    FeatureMap image;
    StageTrace trace;
};

struct RunOptions {
    std::optional<std::chrono::steady_clock::time_point> deadline;
};

namespace detail {

inline void check_deadline(const RunOptions& opts, const char* where) {
    if (opts.deadline && std::chrono::steady_clock::now() > *opts.deadline) {
        throw DeadlineExceeded(std::string("request deadline exceeded before ") + where);
    }
}

// Lazily computed encodings of the fixed inputs, shared across stages.
class EncodingCache {
public:
    EncodingCache(const WeightStore& w, const FeatureMap& image) : weights_(&w), image_(&image) {}

    const FeatureMap& image() const { return *image_; }

    const FeatureMap& at(int level) {
        if (!levels_ || !levels_->has(level) || depth_ < level) {
            levels_ = encode_levels(*image_, std::max(level, depth_), *weights_);
            depth_ = std::max(level, depth_);
        }
        return levels_->at(level);
    }

    /// Encoding of `other` at `level`, reusing the cache when it is the same image.
    FeatureMap encode_other(const FeatureMap& other, int level) {
        if (other == *image_) return at(level);
        return encode(other, level, *weights_);
    }

private:
    const WeightStore* weights_;
    const FeatureMap* image_;
    std::optional<EncodedLevels> levels_;
    int depth_ = 0;
};

// Places `reformed` over a copy of `base` when reassembly did not cover the
// whole grid (stride > 1 with a remainder).
inline FeatureMap fit_to(FeatureMap reformed, const FeatureMap& base) {
    if (reformed.shape() == base.shape()) return reformed;
    FeatureMap out = base;
    for (std::size_t c = 0; c < reformed.channels(); ++c)
        for (std::size_t r = 0; r < reformed.height(); ++r)
            for (std::size_t q = 0; q < reformed.width(); ++q) out(c, r, q) = reformed(c, r, q);
    return out;
}

inline FeatureMap apply_blend(FeatureMap out, const FeatureMap& in, double blend) {
    if (blend >= 1.0) return out;
    return lerp(out, in, static_cast<float>(blend), static_cast<float>(1.0 - blend));
}

struct StageContext {
    const WeightStore& weights;
    EncodingCache style;
    EncodingCache style_sem;
    EncodingCache target_sem;
    StageTrace* trace = nullptr;
};

inline FeatureMap reform_stage(StageContext& ctx, const FeatureMap& temp, int level, std::size_t patch,
                               bool global_view, double omega, double blend, const TransferConfig& cfg) {
    const FeatureMap& f_style = ctx.style.at(level);
    const FeatureMap f_temp = ctx.target_sem.encode_other(temp, level);
    const FusionMode mode{cfg.fusion, omega};
    VstrResult res;
    if (cfg.fusion == FusionVariant::downsample) {
        res = vstr_detailed(f_style, f_temp, ctx.style_sem.image(), ctx.target_sem.image(),
                            global_view ? global_patch_size(f_style, f_temp) : patch, cfg.stride, mode);
    } else {
        const FeatureMap& sem_s = ctx.style_sem.at(level);
        const FeatureMap& sem_t = ctx.target_sem.at(level);
        res = vstr_detailed(f_style, f_temp, sem_s, sem_t, global_view ? global_patch_size(f_style, f_temp) : patch,
                            cfg.stride, mode);
    }
    if (ctx.trace) {
        if (level == 5) {
            ctx.trace->stage1_matches = res.matches;
            ctx.trace->stage1_patch_size = res.patch_size;
            ctx.trace->stage1_patch_count = res.patch_count;
        } else {
            ctx.trace->stage2_matches = res.matches;
            ctx.trace->stage2_patch_count = res.patch_count;
        }
    }
    FeatureMap out = apply_blend(fit_to(std::move(res.feature), f_temp), f_temp, blend);
    return decode(out, level, ctx.weights);
}

inline FeatureMap stage1(StageContext& ctx, const FeatureMap& init, const TransferConfig& cfg) {
    const bool global_view = !cfg.patch_size_override.has_value();
    return reform_stage(ctx, init, 5, cfg.patch_size_override.value_or(0), global_view, cfg.omega1, cfg.blend[0],
                        cfg);
}

inline FeatureMap stage2(StageContext& ctx, const FeatureMap& temp, const TransferConfig& cfg) {
    return reform_stage(ctx, temp, 4, cfg.p_stage2, false, cfg.omega2, cfg.blend[1], cfg);
}

inline FeatureMap stage3(StageContext& ctx, const FeatureMap& temp_in, const TransferConfig& cfg,
                         const RunOptions& opts) {
    std::optional<LabelGrid> source_labels;
    std::optional<LabelGrid> target_labels;
    if (cfg.se_scope == EnhancementVariant::per_label) {
        const Rgb8Image s = denormalize(ctx.style_sem.image());
        const Rgb8Image t = denormalize(ctx.target_sem.image());
        const auto palette = build_palette({&s, &t}, cfg.snap_tolerance);
        source_labels = assign_labels(s, palette);
        target_labels = assign_labels(t, palette);
    }
    FeatureMap temp = temp_in;
    for (int level = 3; level >= 1; --level) {
        check_deadline(opts, "enhancement level");
        const FeatureMap& f_style = ctx.style.at(level);
        const FeatureMap f_temp = encode(temp, level, ctx.weights);
        EnhancementScope scope;
        if (source_labels) {
            scope = EnhancementScope::per_label(source_labels->resampled(f_style.height(), f_style.width()),
                                                target_labels->resampled(f_temp.height(), f_temp.width()));
        }
        FeatureMap out = apply_blend(se(f_style, f_temp, scope), f_temp, cfg.blend[2]);
        temp = decode(out, level, ctx.weights);
        if (ctx.trace) {
            if (level == 3) ctx.trace->t3 = temp;
            if (level == 2) ctx.trace->t2 = temp;
        }
    }
    return temp;
}

inline void check_image_input(const FeatureMap& img, const char* what, std::size_t multiple) {
    if (img.channels() != 3) throw DimensionMismatch(std::string(what) + " must have 3 channels");
    if (img.height() == 0 || img.width() == 0 || img.height() % multiple || img.width() % multiple) {
        throw DimensionMismatch(std::string(what) + " " + img.shape().str() + " is not divisible by " +
                                std::to_string(multiple));
    }
}

template <typename F>
auto run_stage(Stage stage, F&& body) {
    try {
        return body();
    } catch (const DeadlineExceeded&) {
        throw;
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage_name(stage), e.what());
    }
}

}  // namespace detail

/// Stage I: reformation at relu5_1 with the global view patch size (or the
/// configured override), decoded through decoder 5. Returns `init` unchanged
/// when the stage is disabled.
inline FeatureMap stage1_global_align(const FeatureMap& s_sty, const FeatureMap& s_sem, const FeatureMap& t_sem,
                                      const FeatureMap& init, const TransferConfig& cfg, const WeightStore& w) {
    if (!cfg.enabled(Stage::global_align)) return init;
    cfg.validate();
    return detail::run_stage(Stage::global_align, [&] {
        detail::check_image_input(s_sty, "source style", 16);
        detail::check_image_input(init, "temporary target", 16);
        detail::StageContext ctx{w, {w, s_sty}, {w, s_sem}, {w, t_sem}, nullptr};
        return detail::stage1(ctx, init, cfg);
    });
}

/// Stage II: reformation at relu4_1 with the local view patch size.
inline FeatureMap stage2_local_refine(const FeatureMap& s_sty, const FeatureMap& s_sem, const FeatureMap& t_sem,
                                      const FeatureMap& temp, const TransferConfig& cfg, const WeightStore& w) {
    if (!cfg.enabled(Stage::local_refine)) return temp;
    cfg.validate();
    return detail::run_stage(Stage::local_refine, [&] {
        detail::check_image_input(s_sty, "source style", 8);
        detail::check_image_input(temp, "temporary target", 8);
        detail::StageContext ctx{w, {w, s_sty}, {w, s_sem}, {w, t_sem}, nullptr};
        return detail::stage2(ctx, temp, cfg);
    });
}

/// Stage III: statistics enhancement at relu3_1, relu2_1 and relu1_1, each
/// level round-tripping through its decoder. Semantic maps are only used by
/// the per-label scope.
inline FeatureMap stage3_enhance(const FeatureMap& s_sty, const FeatureMap& temp, const TransferConfig& cfg,
                                 const WeightStore& w, const FeatureMap* s_sem = nullptr,
                                 const FeatureMap* t_sem = nullptr) {
    if (!cfg.enabled(Stage::enhance)) return temp;
    cfg.validate();
    if (cfg.se_scope == EnhancementVariant::per_label && (!s_sem || !t_sem)) {
        throw StageError("III", "per-label enhancement needs both semantic maps");
    }
    const FeatureMap empty;
    return detail::run_stage(Stage::enhance, [&] {
        detail::check_image_input(s_sty, "source style", 4);
        detail::check_image_input(temp, "temporary target", 4);
        detail::StageContext ctx{w, {w, s_sty}, {w, s_sem ? *s_sem : empty}, {w, t_sem ? *t_sem : empty}, nullptr};
        return detail::stage3(ctx, temp, cfg, RunOptions{});
    });
}

/// Runs the enabled stages in order I -> II -> III. The initial temporary
/// target is the target semantic image itself.
inline TransferResult run_transfer(const TransferInputs& in, const TransferConfig& cfg, const WeightStore& w,
                                   const RunOptions& opts = {}) {
    cfg.validate();
    try {
        detail::check_image_input(in.style, "source style", 16);
        detail::check_image_input(in.style_sem, "source semantic map", 16);
        detail::check_image_input(in.target_sem, "target semantic map", 16);
    } catch (const Error& e) {
        throw StageError("input", e.what());
    }
    if (in.style.shape() != in.style_sem.shape()) {
        throw StageError("input", "source style " + in.style.shape().str() + " and source semantic map " +
                                      in.style_sem.shape().str() + " differ in size");
    }

    TransferResult result;
    detail::StageContext ctx{w, {w, in.style}, {w, in.style_sem}, {w, in.target_sem}, &result.trace};
    FeatureMap temp = in.target_sem;
    using clock = std::chrono::steady_clock;
    auto timed = [&](Stage stage, auto&& body) {
        detail::check_deadline(opts, (std::string("stage ") + stage_name(stage)).c_str());
        const auto t0 = clock::now();
        temp = detail::run_stage(stage, body);
        result.trace.seconds[static_cast<std::size_t>(stage)] =
            std::chrono::duration<double>(clock::now() - t0).count();
    };
    if (cfg.enabled(Stage::global_align)) {
        timed(Stage::global_align, [&] { return detail::stage1(ctx, temp, cfg); });
        result.trace.t5 = temp;
    }
    if (cfg.enabled(Stage::local_refine)) {
        timed(Stage::local_refine, [&] { return detail::stage2(ctx, temp, cfg); });
        result.trace.t4 = temp;
    }
    if (cfg.enabled(Stage::enhance)) {
        timed(Stage::enhance, [&] { return detail::stage3(ctx, temp, cfg, opts); });
        result.trace.final_image = temp;
    }
    result.image = std::move(temp);
    return result;
}

/// Center-crops the three 8-bit inputs to multiples of 16 and normalizes them.
inline TransferInputs prepare_inputs(const Rgb8Image& style, const Rgb8Image& style_sem,
                                     const Rgb8Image& target_sem) {
    try {
        return {normalize(align_dims(style, 16)), normalize(align_dims(style_sem, 16)),
                normalize(align_dims(target_sem, 16))};
    } catch (const Error& e) {
        throw StageError("input", e.what());
    }
}

}  // namespace texreform
