// Transfers a procedural texture onto a hand-made two-region layout and
// writes the result plus the stage intermediates next to the output path.
//
//   demo_basic [weights.tfrw] [out.png]
//
// Without a weight file a random store is used; the output then shows the
// patch layout but not a faithful reconstruction.

#include <cmath>
#include <iostream>

#include "texreform/texreform.hpp"

using namespace texreform;

namespace {

Rgb8Image make_style(std::size_t n) {
    Rgb8Image img(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const bool left = c < n / 2;
            const double s = 0.5 + 0.5 * std::sin((left ? 0.4 : 0.15) * (r + 2 * c));
            auto* px = img.at(r, c);
            px[0] = static_cast<std::uint8_t>(left ? 200 * s : 60);
            px[1] = static_cast<std::uint8_t>(left ? 90 : 180 * s);
            px[2] = static_cast<std::uint8_t>(left ? 40 : 120 + 100 * s);
        }
    return img;
}

Rgb8Image make_map(std::size_t n, bool diagonal) {
    Rgb8Image img(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const bool first = diagonal ? r + c < n : c < n / 2;
            auto* px = img.at(r, c);
            px[0] = first ? 255 : 0;
            px[1] = 0;
            px[2] = first ? 0 : 255;
        }
    return img;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string out = argc > 2 ? argv[2] : "demo_out.png";
    const WeightStore weights = argc > 1 ? load_weights(argv[1]) : make_random_weights(1);
    if (weights.is_random()) std::cerr << "note: using random weights\n";

    const std::size_t n = 128;
    const auto inputs = prepare_inputs(make_style(n), make_map(n, false), make_map(n, true));
    TransferConfig cfg;
    cfg.omega1 = cfg.omega2 = 50.0;

    const auto result = run_transfer(inputs, cfg, weights);
    save_image(result.image, out);
    if (result.trace.t5) save_image(*result.trace.t5, out + ".stage1.png");
    if (result.trace.t4) save_image(*result.trace.t4, out + ".stage2.png");
    for (std::size_t i = 0; i < 3; ++i) {
        std::cout << "stage " << kStageNames[i] << ": " << result.trace.seconds[i] << " s\n";
    }
    std::cout << "global patch size " << result.trace.stage1_patch_size << ", wrote " << out << "\n";
    return 0;
}
