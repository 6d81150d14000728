#include "nert/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "nert/errors.hpp"

namespace nert::metrics {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw DomainError("images differ in shape");
    if (a.empty()) throw DomainError("empty image");
}

std::vector<double> gaussian_1d() {
    std::vector<double> g(kWindow);
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double x = i - kWindow / 2;
        g[i] = std::exp(-x * x / (2 * kSigma * kSigma));
        sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
}

// Valid-region separable filtering of a single-channel plane.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& x, const std::vector<double>& g) {
    const Eigen::Index r = x.rows() - kWindow + 1, c = x.cols() - kWindow + 1;
    Eigen::MatrixXd tmp = Eigen::MatrixXd::Zero(r, x.cols());
    for (int k = 0; k < kWindow; ++k) tmp += g[k] * x.middleRows(k, r);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(r, c);
    for (int k = 0; k < kWindow; ++k) out += g[k] * tmp.middleCols(k, c);
    return out;
}

Eigen::MatrixXd plane(const Image& img, int ch) {
    Eigen::MatrixXd m(img.rows, img.cols);
    for (int r = 0; r < img.rows; ++r)
        for (int c = 0; c < img.cols; ++c) m(r, c) = img(r, c, ch);
    return m;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    check_pair(a, b);
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse < 1e-10) return kPsnrCap;
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
    check_pair(a, b);
    if (a.rows < kWindow || a.cols < kWindow) throw DomainError("images are smaller than the 11x11 SSIM window");
    const auto g = gaussian_1d();
    double total = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) {
        const Eigen::MatrixXd x = plane(a, ch), y = plane(b, ch);
        const Eigen::ArrayXXd mx = filter_valid(x, g).array(), my = filter_valid(y, g).array();
        const Eigen::ArrayXXd sxx = filter_valid(x.cwiseProduct(x), g).array() - mx * mx;
        const Eigen::ArrayXXd syy = filter_valid(y.cwiseProduct(y), g).array() - my * my;
        const Eigen::ArrayXXd sxy = filter_valid(x.cwiseProduct(y), g).array() - mx * my;
        const Eigen::ArrayXXd map =
            ((2 * mx * my + kC1) * (2 * sxy + kC2)) / ((mx * mx + my * my + kC1) * (sxx + syy + kC2));
        total += map.mean();
    }
    return total / a.channels;
}

double laplacian_variance(const Image& image) {
    const Image lum = luminance(image);
    if (lum.rows < 3 || lum.cols < 3) return 0.0;
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(lum.rows - 2) * (lum.cols - 2));
    for (int r = 1; r + 1 < lum.rows; ++r) {
        for (int c = 1; c + 1 < lum.cols; ++c) {
            v.push_back(lum(r - 1, c, 0) + lum(r + 1, c, 0) + lum(r, c - 1, 0) + lum(r, c + 1, 0) - 4 * lum(r, c, 0));
        }
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return var / static_cast<double>(v.size());
}

Baselines baselines(const FrameStack& frames) {
    require_uniform(frames, 1);
    Baselines out;
    out.temporal_mean = Image(frames[0].rows, frames[0].cols, frames[0].channels);
    for (const auto& f : frames) out.temporal_mean.matrix() += f.matrix();
    out.temporal_mean.matrix() /= static_cast<double>(frames.size());
    for (const auto& f : frames) out.sharpness.push_back(laplacian_variance(f));
    // First maximum wins, so ties resolve to the earliest frame.
    out.sharpest_index = static_cast<int>(std::max_element(out.sharpness.begin(), out.sharpness.end()) -
                                          out.sharpness.begin());
    out.sharpest = frames[out.sharpest_index];
    return out;
}

EvalReport evaluate(const Image& restored, const Image& truth, const FrameStack& frames) {
    EvalReport r;
    r.psnr = psnr(restored, truth);
    r.ssim = ssim(restored, truth);
    if (!frames.empty()) {
        const Baselines b = baselines(frames);
        r.baseline_psnr = psnr(b.temporal_mean, truth);
        r.baseline_ssim = ssim(b.temporal_mean, truth);
        r.sharpest_psnr = psnr(b.sharpest, truth);
        for (const auto& f : frames) r.frame_psnrs.push_back(psnr(f, truth));
        r.best_frame_psnr = *std::max_element(r.frame_psnrs.begin(), r.frame_psnrs.end());
    }
    return r;
}

nlohmann::json to_json(const EvalReport& r) {
    return {{"psnr", r.psnr},
            {"ssim", r.ssim},
            {"baseline_psnr", r.baseline_psnr},
            {"baseline_ssim", r.baseline_ssim},
            {"sharpest_psnr", r.sharpest_psnr},
            {"best_frame_psnr", r.best_frame_psnr},
            {"frame_psnrs", r.frame_psnrs}};
}

}  // namespace nert::metrics
