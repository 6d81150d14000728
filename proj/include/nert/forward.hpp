#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "nert/field.hpp"
#include "nert/image.hpp"
#include "nert/optics.hpp"
#include "nert/psf_basis.hpp"
#include "nert/warp.hpp"

namespace nert {

/// One concrete kernel per pixel; column p is the row-major p x p kernel of
/// output pixel p.
struct PsfField {
    int rows = 0;
    int cols = 0;
    int kernel_size = 0;
    Eigen::MatrixXd kernels;
};

/// Ground-truth distortion of one rendered frame.
struct DistortionSample {
    CoordGrid tilt_grid;
    ZernikeField blur_field;
    int frame_index = 0;
};

namespace forward {

enum class PsfPath {
    Analytic,  ///< pupil FFT at every pixel of the upsampled coefficients
    Basis,     ///< pupil FFT at control points, projected onto the basis, interpolated
};

/// Exact per-pixel kernels from upsampled coefficients.
PsfField psf_field_analytic(const ZernikeField& field, optics::PupilPsf& pupil);

/// Intermediates of psf_field_from_basis needed for its adjoint.
struct BasisPsfCache {
    Eigen::MatrixXd raw;   ///< mean + components * beta per pixel, before clipping
    Eigen::VectorXd mass;  ///< per-pixel sum of the clipped kernel
};

/// Kernels through the basis: each control point's PSF is projected onto
/// the basis, coordinates are bilinearly interpolated to pixels, then every
/// kernel is clipped at zero and renormalized.
PsfField psf_field_from_basis(const ZernikeField& field, const optics::PsfBasis& basis, optics::PupilPsf& pupil,
                              BasisPsfCache* cache = nullptr);

/// Adjoint of psf_field_from_basis: returns d/d field.coeffs.
std::vector<double> psf_field_from_basis_backward(const ZernikeField& field, const optics::PsfBasis& basis,
                                                  optics::PupilPsf& pupil, const BasisPsfCache& cache,
                                                  const Eigen::MatrixXd& grad_kernels);

/// Shift-varying convolution out(x) = sum_d K_x(d) in(x - d), edge replicated.
Image apply_psf_field(const Image& image, const PsfField& psfs);

/// Accumulating adjoint of apply_psf_field. Either output may be null.
void apply_psf_field_backward(const Image& image, const PsfField& psfs, const Image& grad_out, Image* grad_image,
                              Eigen::MatrixXd* grad_kernels);

/// Kernels for `field` along the chosen path. The basis supplies kernel size
/// and pupil sampling for both paths.
PsfField make_psf_field(const ZernikeField& field, const optics::PsfBasis& basis, PsfPath path = PsfPath::Basis);

Image apply_spatially_varying_blur(const Image& image, const ZernikeField& field, const optics::PsfBasis& basis,
                                   PsfPath path = PsfPath::Basis);

/// I = B(T(J)).
Image render_tilt_then_blur(const Image& clean, const DistortionSample& sample, const optics::PsfBasis& basis,
                            PsfPath path = PsfPath::Basis);
/// I = T(B(J)); for analysis only.
Image render_blur_then_tilt(const Image& clean, const DistortionSample& sample, const optics::PsfBasis& basis,
                            PsfPath path = PsfPath::Basis);

Image render_tilt_then_blur(const Image& clean, const CoordGrid& tilt_grid, const PsfField& psfs);
Image render_blur_then_tilt(const Image& clean, const CoordGrid& tilt_grid, const PsfField& psfs);

/// |tilt-then-blur - blur-then-tilt| summed over channels (single channel).
Image model_discrepancy(const Image& clean, const DistortionSample& sample, const optics::PsfBasis& basis,
                        PsfPath path = PsfPath::Basis);
Image model_discrepancy(const Image& clean, const CoordGrid& tilt_grid, const PsfField& psfs);

/// Spatially invariant closed forms with one kernel g and per-pixel tilt t
/// (pixels, sampling convention J(u + t)):
///   tilt-then-blur  sum_j g(x_i - u_j) J(u_j + t_j)
///   blur-then-tilt  sum_j g(x_i - u_j) J(u_j + t_i)
Image invariant_tilt_then_blur(const Image& clean, const TiltField& tilts, std::span<const double> kernel);
Image invariant_blur_then_tilt(const Image& clean, const TiltField& tilts, std::span<const double> kernel);
/// First-order difference (blur-then-tilt minus tilt-then-blur):
///   sum_j g(x_i - u_j) grad J(u_j) . (t_i - t_j)
Image invariant_first_order_difference(const Image& clean, const TiltField& tilts, std::span<const double> kernel);

struct SimulationOptions {
    int num_modes = optics::kDefaultModes;
    int control_spacing = kDefaultControlSpacing;
    int pupil_resolution = 0;
};

struct SimulatedStack {
    FrameStack frames;
    std::vector<DistortionSample> truth;
};

/// Renders `n_frames` tilt-then-blur observations of `clean` with the
/// analytic PSF path. Frame k draws its fields from a sub-stream of
/// (seed, k), so frames are independent and reproducible.
SimulatedStack simulate_stack(const Image& clean, const optics::TurbulenceParams& params, int n_frames,
                              std::uint64_t seed, const SimulationOptions& options = {});

/// Ground-truth distortions as an array container.
void save_distortions(const std::vector<DistortionSample>& truth, const std::filesystem::path& path);
std::vector<DistortionSample> load_distortions(const std::filesystem::path& path);

}  // namespace forward
}  // namespace nert
