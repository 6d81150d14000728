#pragma once

#include <memory>
#include <span>
#include <vector>

namespace nert::optics {

/// First Noll index handled by the blur path. Piston (1) and the two tilts
/// (2, 3) are carried by the coordinate grid instead.
inline constexpr int kFirstBlurMode = 4;
/// Default number of blur modes (Noll 4..36).
inline constexpr int kDefaultModes = 33;
/// Fine FFT samples per output pixel along each axis; odd so the central
/// pixel straddles the zero-frequency sample.
inline constexpr int kPsfOversample = 3;

struct RadialOrder {
    int n = 0;  ///< radial degree
    int m = 0;  ///< signed azimuthal frequency; negative selects sin(|m| theta)
};

/// Noll index -> (n, m). Throws DomainError for j < 1.
RadialOrder noll_to_nm(int j);

/// Noll-normalized Zernike polynomial Z_j(rho, theta); unit-disk mean square is 1.
double zernike(int j, double rho, double theta);

/// Variance (rad^2) of Noll coefficient j under Kolmogorov turbulence, per
/// unit (D/r0)^(5/3). Zero for piston.
double kolmogorov_variance(int j);

/// Turbulence strength and PSF support shared by simulation and restoration.
struct TurbulenceParams {
    double d_over_r0 = 5.0;
    double corr = -5.0;
    int kernel_size = 11;

    /// Throws DomainError on negative strength, corr outside [-5, -0.01]
    /// or an even/too small kernel.
    void validate() const;

    /// (D/r0)^(5/3), the common factor of every coefficient variance.
    double strength() const;
};

/// Standard deviation of the per-pixel tilt along one axis, in pixels.
/// One pixel is one diffraction unit (lambda / D).
double tilt_sigma_pixels(double d_over_r0);

/// Maps Zernike coefficients to a normalized p x p intensity PSF as
/// |FFT(pupil * exp(i phi))|^2, binned kPsfOversample x kPsfOversample.
///
/// Holds FFT buffers, so a single instance must not be shared across threads.
class PupilPsf {
public:
    /// `modes` lists the Noll index of every coefficient slot.
    PupilPsf(int kernel_size, std::vector<int> modes, int pupil_resolution = 0);
    /// Convenience for the contiguous blur modes 4..num_modes+3.
    PupilPsf(int kernel_size, int num_modes, int pupil_resolution = 0);
    ~PupilPsf();
    PupilPsf(PupilPsf&&) noexcept;
    PupilPsf& operator=(PupilPsf&&) noexcept;

    int kernel_size() const;
    int pupil_resolution() const;
    const std::vector<int>& modes() const;

    /// Row-major p*p kernel, nonnegative, summing to 1.
    std::vector<double> psf(std::span<const double> coeffs);

    /// Vector-Jacobian product: d(sum grad_kernel * psf) / d coeffs.
    std::vector<double> psf_backward(std::span<const double> coeffs, std::span<const double> grad_kernel);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// One-shot form of PupilPsf over modes 4..coeffs.size()+3.
/// `pupil_resolution` 0 selects 4 x kernel_size; below kernel_size is a ConfigError.
std::vector<double> phase_to_psf(std::span<const double> coeffs, int kernel_size, int pupil_resolution = 0);

/// Clips negatives then rescales to unit sum. All-nonpositive input yields a
/// centered delta.
void sanitize_psf(std::span<double> kernel);

}  // namespace nert::optics
