#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nert/optics.hpp"

namespace nert::optics {

inline constexpr int kDefaultBasisSize = 32;
inline constexpr int kDefaultBasisSamples = 2000;

/// Mean PSF plus orthonormal principal kernels of a sampled PSF family.
struct PsfBasis {
    TurbulenceParams params;
    int num_modes = kDefaultModes;
    int pupil_resolution = 0;
    int n_samples = 0;
    int requested_size = 0;  ///< K' asked for; size() may be smaller
    std::uint64_t seed = 0;

    Eigen::VectorXd mean;             ///< p*p, row-major kernel
    Eigen::MatrixXd components;       ///< p*p x K', orthonormal columns
    Eigen::VectorXd singular_values;  ///< full spectrum of the centred sample matrix
    std::vector<std::string> warnings;

    int kernel_size() const { return params.kernel_size; }
    int size() const { return static_cast<int>(components.cols()); }

    /// Coordinates of a kernel in the basis.
    Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& psf) const;
    /// mean + components * beta, without clipping.
    Eigen::VectorXd reconstruct(const Eigen::Ref<const Eigen::VectorXd>& beta) const;
    /// Share of the sample variance carried by the retained components.
    double variance_captured() const;
};

/// Coefficient vectors for the basis are drawn independently per mode with
/// Kolmogorov variances; their PSFs come from the pupil FFT.
Eigen::MatrixXd sample_psfs(const TurbulenceParams& params, int n_samples, std::uint64_t seed,
                            int num_modes = kDefaultModes, int pupil_resolution = 0);

/// Principal components of `n_samples` sampled PSFs. When the sample matrix
/// has rank below `basis_size`, the basis shrinks and a warning is recorded.
PsfBasis build_psf_basis(const TurbulenceParams& params, int n_samples, int basis_size, std::uint64_t seed,
                         int num_modes = kDefaultModes, int pupil_resolution = 0);

/// Writes the float32 array container plus `<path>.json` sidecar carrying
/// the parameters and the SHA-256 of the array file.
void save_psf_basis(const PsfBasis& basis, const std::filesystem::path& path);

/// Loads a saved basis after checking the sidecar hash against the file.
PsfBasis load_psf_basis(const std::filesystem::path& path);

/// True when a saved basis exists whose sidecar matches these settings and
/// whose hash validates.
bool basis_cache_matches(const std::filesystem::path& path, const TurbulenceParams& params, int basis_size,
                         int n_samples, std::uint64_t seed, int num_modes);

}  // namespace nert::optics
