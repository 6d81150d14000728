#include "nert/optics.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "nert/errors.hpp"

namespace nert::optics {

RadialOrder noll_to_nm(int j) {
    if (j < 1) throw DomainError("Noll index must be >= 1, got " + std::to_string(j));
    int n = 0;
    while ((n + 1) * (n + 2) / 2 < j) ++n;
    const int k = j - n * (n + 1) / 2 - 1;  // position within radial order n
    int m = (n % 2 == 0) ? 2 * ((k + 1) / 2) : 2 * (k / 2) + 1;
    if (m != 0 && j % 2 == 1) m = -m;
    return {n, m};
}

namespace {

double radial(int n, int m, double rho) {
    const int am = std::abs(m);
    double sum = 0.0;
    for (int s = 0; s <= (n - am) / 2; ++s) {
        const double num = std::tgamma(n - s + 1.0);
        const double den = std::tgamma(s + 1.0) * std::tgamma((n + am) / 2 - s + 1.0) *
                           std::tgamma((n - am) / 2 - s + 1.0);
        sum += ((s % 2) ? -1.0 : 1.0) * num / den * std::pow(rho, n - 2 * s);
    }
    return sum;
}

}  // namespace

double zernike(int j, double rho, double theta) {
    const auto [n, m] = noll_to_nm(j);
    if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("Zernike radius outside [0,1]");
    const double r = radial(n, m, rho);
    if (m == 0) return std::sqrt(n + 1.0) * r;
    const double norm = std::sqrt(2.0 * (n + 1.0));
    return m > 0 ? norm * r * std::cos(m * theta) : norm * r * std::sin(-m * theta);
}

double kolmogorov_variance(int j) {
    const auto [n, m] = noll_to_nm(j);
    if (n == 0) return 0.0;
    const double pi = std::numbers::pi;
    const double kz = std::pow(4.8 * std::tgamma(6.0 / 5.0), 5.0 / 6.0) * std::tgamma(14.0 / 3.0) *
                      std::pow(std::tgamma(11.0 / 6.0), 2.0) / (std::pow(2.0, 8.0 / 3.0) * pi);
    (void)m;
    const double lg = std::lgamma(n - 5.0 / 6.0) - 2.0 * std::lgamma(17.0 / 6.0) - std::lgamma(n + 23.0 / 6.0);
    return kz * (n + 1.0) * std::exp(lg);
}

void TurbulenceParams::validate() const {
    if (!(d_over_r0 >= 0.0) || !std::isfinite(d_over_r0)) throw DomainError("d_over_r0 must be finite and >= 0");
    if (!(corr >= -5.0 && corr <= -0.01)) throw DomainError("corr must lie in [-5, -0.01]");
    if (kernel_size < 3 || kernel_size % 2 == 0) throw DomainError("kernel_size must be odd and >= 3");
}

double TurbulenceParams::strength() const { return std::pow(d_over_r0, 5.0 / 3.0); }

double tilt_sigma_pixels(double d_over_r0) {
    // A Noll-2 coefficient a deflects the image by 2a/pi diffraction units.
    const double var_rad = kolmogorov_variance(2) * std::pow(d_over_r0, 5.0 / 3.0);
    return 2.0 / std::numbers::pi * std::sqrt(var_rad);
}

// The FFT of the zero-padded pupil is only needed at the 3p x 3p
// frequencies that land in the kernel, so it is evaluated as a matrix DFT
// E = W P W^T restricted to those frequencies.
struct PupilPsf::Impl {
    int kernel = 0;
    int resolution = 0;
    int fft = 0;
    std::vector<int> modes;
    std::vector<int> support;  // flat r * resolution + c of each in-pupil sample
    Eigen::MatrixXd z;         // samples x modes
    Eigen::MatrixXcd w;        // (oversample * kernel) x resolution DFT rows
    Eigen::MatrixXcd pupil;
    Eigen::MatrixXcd field;    // E at the kernel frequencies

    void load_pupil(std::span<const double> coeffs) {
        if (coeffs.size() != modes.size()) {
            throw DomainError("expected " + std::to_string(modes.size()) + " Zernike coefficients, got " +
                              std::to_string(coeffs.size()));
        }
        const Eigen::VectorXd phi =
            z * Eigen::Map<const Eigen::VectorXd>(coeffs.data(), static_cast<Eigen::Index>(coeffs.size()));
        pupil.setZero(resolution, resolution);
        for (std::size_t s = 0; s < support.size(); ++s) {
            pupil(support[s] / resolution, support[s] % resolution) = std::polar(1.0, phi[s]);
        }
        field.noalias() = w * pupil * w.transpose();
    }

    // Bins |E|^2 into the kernel; returns the unnormalized sum.
    double bin(std::vector<double>& out) const {
        out.assign(static_cast<std::size_t>(kernel) * kernel, 0.0);
        for (Eigen::Index j = 0; j < field.cols(); ++j) {
            for (Eigen::Index i = 0; i < field.rows(); ++i) {
                out[(i / kPsfOversample) * kernel + j / kPsfOversample] += std::norm(field(i, j));
            }
        }
        double sum = 0.0;
        for (double v : out) sum += v;
        return sum;
    }
};

PupilPsf::PupilPsf(int kernel_size, std::vector<int> modes, int pupil_resolution) : impl_(std::make_unique<Impl>()) {
    if (kernel_size < 1 || kernel_size % 2 == 0) throw DomainError("PSF kernel size must be odd and positive");
    if (pupil_resolution == 0) pupil_resolution = 4 * kernel_size;
    if (pupil_resolution < kernel_size) {
        throw ConfigError("pupil resolution " + std::to_string(pupil_resolution) + " is below kernel size " +
                          std::to_string(kernel_size));
    }
    for (int j : modes) noll_to_nm(j);

    auto& d = *impl_;
    d.kernel = kernel_size;
    d.resolution = pupil_resolution;
    d.fft = kPsfOversample * pupil_resolution;
    d.modes = std::move(modes);

    std::vector<std::vector<double>> z(d.modes.size());
    const double half = 0.5 * pupil_resolution;
    for (int r = 0; r < pupil_resolution; ++r) {
        for (int c = 0; c < pupil_resolution; ++c) {
            const double x = (c + 0.5 - half) / half;
            const double y = (r + 0.5 - half) / half;
            const double rho = std::hypot(x, y);
            if (rho > 1.0) continue;
            const double theta = std::atan2(y, x);
            d.support.push_back(r * pupil_resolution + c);
            for (std::size_t k = 0; k < d.modes.size(); ++k) z[k].push_back(zernike(d.modes[k], rho, theta));
        }
    }
    d.z.resize(static_cast<Eigen::Index>(d.support.size()), static_cast<Eigen::Index>(d.modes.size()));
    for (std::size_t k = 0; k < z.size(); ++k) {
        for (std::size_t s = 0; s < z[k].size(); ++s) d.z(s, k) = z[k][s];
    }

    // Row i holds frequency f = i - (oversample * kernel) / 2, so kernel pixel
    // a collects rows oversample*a .. oversample*a + oversample - 1, centred on
    // the zero frequency for the middle pixel.
    const int n_freq = kPsfOversample * kernel_size;
    d.w.resize(n_freq, pupil_resolution);
    for (int i = 0; i < n_freq; ++i) {
        const int f = i - n_freq / 2;
        for (int r = 0; r < pupil_resolution; ++r) {
            const long phase = ((static_cast<long>(f) * r) % d.fft + d.fft) % d.fft;
            d.w(i, r) = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(phase) / d.fft);
        }
    }
}

namespace {

std::vector<int> contiguous_modes(int num_modes) {
    if (num_modes < 0) throw DomainError("number of Zernike modes must be >= 0");
    std::vector<int> modes(static_cast<std::size_t>(num_modes));
    for (int k = 0; k < num_modes; ++k) modes[k] = kFirstBlurMode + k;
    return modes;
}

}  // namespace

PupilPsf::PupilPsf(int kernel_size, int num_modes, int pupil_resolution)
    : PupilPsf(kernel_size, contiguous_modes(num_modes), pupil_resolution) {}

PupilPsf::~PupilPsf() = default;
PupilPsf::PupilPsf(PupilPsf&&) noexcept = default;
PupilPsf& PupilPsf::operator=(PupilPsf&&) noexcept = default;

int PupilPsf::kernel_size() const { return impl_->kernel; }
int PupilPsf::pupil_resolution() const { return impl_->resolution; }
const std::vector<int>& PupilPsf::modes() const { return impl_->modes; }

std::vector<double> PupilPsf::psf(std::span<const double> coeffs) {
    auto& d = *impl_;
    d.load_pupil(coeffs);
    std::vector<double> kernel;
    const double sum = d.bin(kernel);
    for (double& v : kernel) v /= sum;
    return kernel;
}

std::vector<double> PupilPsf::psf_backward(std::span<const double> coeffs, std::span<const double> grad_kernel) {
    auto& d = *impl_;
    if (grad_kernel.size() != static_cast<std::size_t>(d.kernel) * d.kernel) {
        throw DomainError("kernel gradient has the wrong size");
    }
    d.load_pupil(coeffs);
    std::vector<double> kernel;
    const double sum = d.bin(kernel);

    // K = B / sum(B)  =>  dL/dB = (G - <G, K>) / sum(B)
    double gk = 0.0;
    for (std::size_t i = 0; i < kernel.size(); ++i) gk += grad_kernel[i] * kernel[i] / sum;

    // I = |E|^2  =>  dL/dE* = g E; pull back through the DFT with its adjoint.
    Eigen::MatrixXcd g = d.field;
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            g(i, j) *= (grad_kernel[(i / kPsfOversample) * d.kernel + j / kPsfOversample] - gk) / sum;
        }
    }
    const Eigen::MatrixXcd v = d.w.adjoint() * g * d.w.conjugate();

    // u = exp(i phi)  =>  dL/dphi = -2 Im(u conj(V))
    Eigen::VectorXd phi_grad(static_cast<Eigen::Index>(d.support.size()));
    for (std::size_t s = 0; s < d.support.size(); ++s) {
        const int r = d.support[s] / d.resolution, c = d.support[s] % d.resolution;
        phi_grad[s] = -2.0 * std::imag(d.pupil(r, c) * std::conj(v(r, c)));
    }
    const Eigen::VectorXd grad = d.z.transpose() * phi_grad;
    return {grad.data(), grad.data() + grad.size()};
}

std::vector<double> phase_to_psf(std::span<const double> coeffs, int kernel_size, int pupil_resolution) {
    PupilPsf psf(kernel_size, static_cast<int>(coeffs.size()), pupil_resolution);
    return psf.psf(coeffs);
}

void sanitize_psf(std::span<double> kernel) {
    double sum = 0.0;
    for (double& v : kernel) {
        if (!(v > 0.0)) v = 0.0;
        sum += v;
    }
    if (sum > 0.0) {
        for (double& v : kernel) v /= sum;
        return;
    }
    kernel[kernel.size() / 2] = 1.0;
}

}  // namespace nert::optics
