#pragma once

#include <vector>

#include <Eigen/Core>

#include "nert/field.hpp"
#include "nert/image.hpp"

namespace nert {

/// Sampling locations in normalized [-1,1]^2, x (columns) then y (rows);
/// corner pixels sit exactly at +-1.
struct CoordGrid {
    int rows = 0;
    int cols = 0;
    std::vector<double> xy;  // 2 per pixel, row-major pixels

    CoordGrid() = default;
    CoordGrid(int rows, int cols) : rows(rows), cols(cols), xy(2 * static_cast<std::size_t>(rows) * cols, 0.0) {}

    int pixels() const { return rows * cols; }
    double x(int r, int c) const { return xy[2 * (static_cast<std::size_t>(r) * cols + c)]; }
    double y(int r, int c) const { return xy[2 * (static_cast<std::size_t>(r) * cols + c) + 1]; }

    Eigen::Map<Eigen::MatrixXd> matrix() { return {xy.data(), 2, pixels()}; }
    Eigen::Map<const Eigen::MatrixXd> matrix() const { return {xy.data(), 2, pixels()}; }
};

namespace warp {

/// Evenly spaced corner-aligned grid. Throws DomainError if m or n < 2.
CoordGrid uniform_grid(int rows, int cols);

/// Bilinear sampling of `image` at every grid location; coordinates outside
/// [-1,1] clamp to the border. Output takes the grid's shape, which must
/// match the image's.
Image resample(const Image& image, const CoordGrid& grid);

/// Accumulates the adjoint of resample. Either output may be null.
/// Gradients w.r.t. coordinates vanish where sampling is clamped.
void resample_backward(const Image& image, const CoordGrid& grid, const Image& grad_out, Image* grad_image,
                       CoordGrid* grad_grid);

/// uniform grid + shift converted to normalized units (2*d/(size-1)).
CoordGrid tilt_field_to_grid(const TiltField& tilts);

/// Inverse of tilt_field_to_grid.
TiltField grid_to_tilt_field(const CoordGrid& grid);

}  // namespace warp
}  // namespace nert
