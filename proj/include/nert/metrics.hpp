#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nert/image.hpp"

namespace nert::metrics {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) with peak 1; kPsnrCap when MSE < 1e-10.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, averaged over channels.
double ssim(const Image& a, const Image& b);

/// Variance of the 4-neighbour Laplacian over interior pixels of the luminance.
double laplacian_variance(const Image& image);

struct Baselines {
    Image temporal_mean;
    Image sharpest;
    int sharpest_index = 0;
    std::vector<double> sharpness;
};

Baselines baselines(const FrameStack& frames);

struct EvalReport {
    double psnr = 0.0;
    double ssim = 0.0;
    double baseline_psnr = 0.0;  ///< temporal mean
    double baseline_ssim = 0.0;
    double sharpest_psnr = 0.0;
    double best_frame_psnr = 0.0;  ///< oracle choice of the best input frame
    std::vector<double> frame_psnrs;
};

/// Scores `restored` and the baselines of `frames` against `truth`.
EvalReport evaluate(const Image& restored, const Image& truth, const FrameStack& frames);

nlohmann::json to_json(const EvalReport& report);

}  // namespace nert::metrics
