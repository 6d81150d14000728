#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "nert/optics.hpp"

namespace nert {

inline constexpr int kDefaultControlSpacing = 16;

/// Coarse control lattice whose corner points coincide with the image corners.
struct ControlLayout {
    int rows = 0;        ///< image rows
    int cols = 0;        ///< image cols
    int ctrl_rows = 0;
    int ctrl_cols = 0;
    int spacing = kDefaultControlSpacing;

    /// ceil((size-1)/spacing)+1 control points per axis, at least 2.
    static ControlLayout for_image(int rows, int cols, int spacing = kDefaultControlSpacing);

    int points() const { return ctrl_rows * ctrl_cols; }
    int pixels() const { return rows * cols; }
    /// Control point position in pixel units (row, col).
    std::array<double, 2> position(int ctrl_index) const;

    bool operator==(const ControlLayout&) const = default;
};

/// Per-pixel Zernike blur coefficients stored on a control lattice.
/// Coefficient k of control point i lives at coeffs[i * num_modes + k];
/// slot k is Noll index 4 + k.
struct ZernikeField {
    ControlLayout layout;
    int num_modes = 0;
    std::vector<double> coeffs;

    ZernikeField() = default;
    ZernikeField(ControlLayout layout, int num_modes);

    std::span<const double> at(int ctrl_index) const {
        return {coeffs.data() + static_cast<std::size_t>(ctrl_index) * num_modes, static_cast<std::size_t>(num_modes)};
    }
    std::span<double> at(int ctrl_index) {
        return {coeffs.data() + static_cast<std::size_t>(ctrl_index) * num_modes, static_cast<std::size_t>(num_modes)};
    }
};

/// Per-pixel displacement (dx along columns, dy along rows) in pixels.
struct TiltField {
    int rows = 0;
    int cols = 0;
    std::vector<double> shift;  // 2 per pixel

    TiltField() = default;
    TiltField(int rows, int cols, double dx = 0.0, double dy = 0.0);

    double dx(int r, int c) const { return shift[2 * (static_cast<std::size_t>(r) * cols + c)]; }
    double dy(int r, int c) const { return shift[2 * (static_cast<std::size_t>(r) * cols + c) + 1]; }
};

/// Bilinear control-lattice -> pixel interpolation with corner alignment.
class ControlUpsampler {
public:
    explicit ControlUpsampler(const ControlLayout& layout);

    /// values: (dim x ctrl_points) column-major; returns (dim x pixels).
    Eigen::MatrixXd upsample(const Eigen::Ref<const Eigen::MatrixXd>& values) const;
    /// Adjoint of upsample.
    Eigen::MatrixXd adjoint(const Eigen::Ref<const Eigen::MatrixXd>& pixel_values) const;

    const ControlLayout& layout() const { return layout_; }

private:
    ControlLayout layout_;
    std::vector<std::array<int, 4>> index_;
    std::vector<std::array<double, 4>> weight_;
};

/// Coefficients upsampled to every pixel, (num_modes x pixels).
Eigen::MatrixXd upsample_coefficients(const ZernikeField& field);

namespace optics {

struct CorrelatedField {
    ZernikeField blur;
    TiltField tilt;
};

/// Variance of each blur slot (Noll 4..num_modes+3) for the given strength.
std::vector<double> blur_mode_variances(double d_over_r0, int num_modes);

/// Symmetric square root of the squared-exponential correlation matrix over
/// the control lattice, length scale -spacing/corr pixels.
Eigen::MatrixXd correlation_factor(const ControlLayout& layout, double corr);

/// Draws spatially correlated blur coefficients and tilts. Channels are
/// independent; every channel shares the correlation factor. Draw order is
/// tilt x, tilt y, then blur modes, so a seed fully determines the result.
CorrelatedField sample_correlated_field(const TurbulenceParams& params, int rows, int cols, int num_modes,
                                        std::uint64_t seed, int spacing = kDefaultControlSpacing);

}  // namespace optics
}  // namespace nert
