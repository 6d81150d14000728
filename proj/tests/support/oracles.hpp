#pragma once

// Scalar reference implementations used as independent oracles. They favour
// the most literal form of each definition over speed.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include "nert/field.hpp"
#include "nert/image.hpp"
#include "nert/optics.hpp"
#include "nert/psf_basis.hpp"
#include "nert/warp.hpp"

namespace nert::oracle {

inline std::filesystem::path data_dir() { return NERT_TEST_DATA_DIR; }

inline Image random_image(int rows, int cols, int channels, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(rows, cols, channels);
    for (double& v : img.data) v = u(rng);
    return img;
}

/// Bilinear lookup at pixel position (y, x), both clamped into the image.
inline double bilinear(const Image& img, double y, double x, int ch) {
    y = std::min(std::max(y, 0.0), img.rows - 1.0);
    x = std::min(std::max(x, 0.0), img.cols - 1.0);
    int y0 = static_cast<int>(std::floor(y));
    int x0 = static_cast<int>(std::floor(x));
    if (y0 == img.rows - 1) --y0;
    if (x0 == img.cols - 1) --x0;
    const double fy = y - y0, fx = x - x0;
    double v = 0.0;
    v += (1 - fy) * (1 - fx) * img(y0, x0, ch);
    v += (1 - fy) * fx * img(y0, x0 + 1, ch);
    v += fy * (1 - fx) * img(y0 + 1, x0, ch);
    v += fy * fx * img(y0 + 1, x0 + 1, ch);
    return v;
}

/// Resampling by a normalized grid, one pixel at a time.
inline Image resample(const Image& img, const CoordGrid& grid) {
    Image out(grid.rows, grid.cols, img.channels);
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            const double x = (grid.x(r, c) + 1.0) * 0.5 * (img.cols - 1);
            const double y = (grid.y(r, c) + 1.0) * 0.5 * (img.rows - 1);
            for (int ch = 0; ch < img.channels; ++ch) out(r, c, ch) = bilinear(img, y, x, ch);
        }
    }
    return out;
}

/// Per-pixel kernel lookup: kernel(r, c) returns a row-major k x k PSF.
/// out(r, c) = sum_{a,b} K_rc(a, b) in(r - (a - h), c - (b - h)), edges replicated.
template <typename KernelAt>
Image shift_varying_convolution(const Image& img, int k, KernelAt&& kernel) {
    const int h = k / 2;
    Image out(img.rows, img.cols, img.channels);
    for (int r = 0; r < img.rows; ++r) {
        for (int c = 0; c < img.cols; ++c) {
            const std::vector<double> K = kernel(r, c);
            for (int a = 0; a < k; ++a) {
                for (int b = 0; b < k; ++b) {
                    const int sr = std::clamp(r - (a - h), 0, img.rows - 1);
                    const int sc = std::clamp(c - (b - h), 0, img.cols - 1);
                    for (int ch = 0; ch < img.channels; ++ch) out(r, c, ch) += K[a * k + b] * img(sr, sc, ch);
                }
            }
        }
    }
    return out;
}

/// Coefficients of pixel (r, c) by bilinear interpolation between the four
/// surrounding control points.
inline std::vector<double> pixel_coefficients(const ZernikeField& field, int r, int c) {
    const auto& L = field.layout;
    const double u = r * (L.ctrl_rows - 1.0) / (L.rows - 1.0);
    const double v = c * (L.ctrl_cols - 1.0) / (L.cols - 1.0);
    const int i0 = std::min(static_cast<int>(u), L.ctrl_rows - 2);
    const int j0 = std::min(static_cast<int>(v), L.ctrl_cols - 2);
    const double fu = u - i0, fv = v - j0;
    std::vector<double> out(field.num_modes, 0.0);
    const int corners[4][2] = {{i0, j0}, {i0, j0 + 1}, {i0 + 1, j0}, {i0 + 1, j0 + 1}};
    const double w[4] = {(1 - fu) * (1 - fv), (1 - fu) * fv, fu * (1 - fv), fu * fv};
    for (int t = 0; t < 4; ++t) {
        const auto a = field.at(corners[t][0] * L.ctrl_cols + corners[t][1]);
        for (int m = 0; m < field.num_modes; ++m) out[m] += w[t] * a[m];
    }
    return out;
}

/// |DFT of the pupil|^2 evaluated term by term at the 3k x 3k frequencies
/// closest to zero on a (3R)^2 grid, summed over 3x3 cells and normalized.
inline std::vector<double> pupil_psf(const std::vector<double>& coeffs, const std::vector<int>& modes, int k, int R) {
    const int F = 3 * R, n = 3 * k;
    const double half = 0.5 * R;
    struct Sample {
        int r, c;
        std::complex<double> u;
    };
    std::vector<Sample> pupil;
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < R; ++c) {
            const double x = (c + 0.5 - half) / half, y = (r + 0.5 - half) / half;
            const double rho = std::hypot(x, y);
            if (rho > 1.0) continue;
            double phi = 0.0;
            for (std::size_t m = 0; m < modes.size(); ++m) phi += coeffs[m] * optics::zernike(modes[m], rho, std::atan2(y, x));
            pupil.push_back({r, c, std::polar(1.0, phi)});
        }
    }
    std::vector<double> K(static_cast<std::size_t>(k) * k, 0.0);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double fu = i - n / 2, fv = j - n / 2;
            std::complex<double> e = 0.0;
            for (const auto& s : pupil) e += s.u * std::polar(1.0, -2.0 * std::numbers::pi * (fu * s.r + fv * s.c) / F);
            K[(i / 3) * k + j / 3] += std::norm(e);
            total += std::norm(e);
        }
    }
    for (double& v : K) v /= total;
    return K;
}

inline std::vector<int> blur_modes(int n) {
    std::vector<int> m;
    for (int j = 0; j < n; ++j) m.push_back(4 + j);
    return m;
}

/// Kernel of pixel (r, c) along the analytic path.
inline std::vector<double> analytic_kernel(const ZernikeField& f, int k, int R, int r, int c) {
    return pupil_psf(pixel_coefficients(f, r, c), blur_modes(f.num_modes), k, R);
}

/// Basis coordinates of every control point's analytic PSF.
inline ZernikeField basis_coordinates(const ZernikeField& f, const optics::PsfBasis& b) {
    ZernikeField beta(f.layout, b.size());
    for (int i = 0; i < f.layout.points(); ++i) {
        std::vector<double> coeffs(f.at(i).begin(), f.at(i).end());
        const auto psf = pupil_psf(coeffs, blur_modes(f.num_modes), b.kernel_size(), b.pupil_resolution);
        for (int j = 0; j < b.size(); ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < psf.size(); ++t) s += b.components(t, j) * (psf[t] - b.mean[t]);
            beta.at(i)[j] = s;
        }
    }
    return beta;
}

/// Kernel of pixel (r, c) along the basis path from control-point
/// coordinates: bilinear coordinates, clip, renormalize.
inline std::vector<double> basis_kernel(const ZernikeField& beta, const optics::PsfBasis& b, int r, int c) {
    const auto bp = pixel_coefficients(beta, r, c);
    std::vector<double> K(b.mean.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < K.size(); ++t) {
        double v = b.mean[t];
        for (int j = 0; j < b.size(); ++j) v += b.components(t, j) * bp[j];
        K[t] = std::max(v, 0.0);
        sum += K[t];
    }
    for (double& v : K) v /= sum;
    return K;
}

inline double psnr(const Image& a, const Image& b) {
    long double se = 0.0;
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c)
            for (int ch = 0; ch < a.channels; ++ch) {
                const long double d = a(r, c, ch) - b(r, c, ch);
                se += d * d;
            }
    const double mse = static_cast<double>(se / (static_cast<long double>(a.rows) * a.cols * a.channels));
    if (mse < 1e-10) return 100.0;
    return -10.0 * std::log10(mse);
}

/// Windowed SSIM with an explicit 2-D Gaussian, valid positions only.
inline double ssim(const Image& a, const Image& b) {
    const int w = 11;
    const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
    std::vector<double> g(w * w);
    double gs = 0.0;
    for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
            g[i * w + j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * sigma * sigma));
            gs += g[i * w + j];
        }
    for (double& v : g) v /= gs;
    double total = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) {
        double sum = 0.0;
        int count = 0;
        for (int r = 0; r + w <= a.rows; ++r) {
            for (int c = 0; c + w <= a.cols; ++c) {
                double mx = 0, my = 0;
                for (int i = 0; i < w; ++i)
                    for (int j = 0; j < w; ++j) {
                        mx += g[i * w + j] * a(r + i, c + j, ch);
                        my += g[i * w + j] * b(r + i, c + j, ch);
                    }
                double vx = 0, vy = 0, cxy = 0;
                for (int i = 0; i < w; ++i)
                    for (int j = 0; j < w; ++j) {
                        const double dx = a(r + i, c + j, ch) - mx, dy = b(r + i, c + j, ch) - my;
                        vx += g[i * w + j] * dx * dx;
                        vy += g[i * w + j] * dy * dy;
                        cxy += g[i * w + j] * dx * dy;
                    }
                sum += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
        total += sum / count;
    }
    return total / a.channels;
}

/// Variance of the 4-neighbour Laplacian of the channel mean, interior only.
inline double laplacian_variance(const Image& img) {
    auto lum = [&](int r, int c) {
        double s = 0.0;
        for (int ch = 0; ch < img.channels; ++ch) s += img(r, c, ch);
        return s / img.channels;
    };
    std::vector<double> v;
    for (int r = 1; r + 1 < img.rows; ++r)
        for (int c = 1; c + 1 < img.cols; ++c)
            v.push_back(lum(r - 1, c) + lum(r + 1, c) + lum(r, c - 1) + lum(r, c + 1) - 4 * lum(r, c));
    double m = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / v.size();
}

/// Central-difference gradient magnitude of the channel mean.
inline Image gradient_magnitude(const Image& img) {
    Image out(img.rows, img.cols, 1);
    auto lum = [&](int r, int c) {
        r = std::clamp(r, 0, img.rows - 1);
        c = std::clamp(c, 0, img.cols - 1);
        double s = 0.0;
        for (int ch = 0; ch < img.channels; ++ch) s += img(r, c, ch);
        return s / img.channels;
    };
    for (int r = 0; r < img.rows; ++r)
        for (int c = 0; c < img.cols; ++c) {
            const double gx = 0.5 * (lum(r, c + 1) - lum(r, c - 1));
            const double gy = 0.5 * (lum(r + 1, c) - lum(r - 1, c));
            out(r, c, 0) = std::hypot(gx, gy);
        }
    return out;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

inline double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    return std::abs(analytic - numeric) / scale;
}

}  // namespace nert::oracle
