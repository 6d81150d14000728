#include "nert/warp.hpp"

#include <algorithm>
#include <cmath>

#include "nert/errors.hpp"

namespace nert::warp {

namespace {

// Sample positions within 1e-9 px of a lattice point snap onto it so that
// integer shifts reproduce pixel values exactly.
constexpr double kSnap = 1e-9;

struct Tap {
    int i0;
    double f;      // weight of i0 + 1
    double scale;  // d(pixel coordinate)/d(normalized coordinate), 0 when clamped
};

Tap locate(double coord, int size) {
    const double half = 0.5 * (size - 1);
    double p = (coord + 1.0) * half;
    double scale = half;
    if (!(p > 0.0)) {
        p = 0.0;
        scale = coord < -1.0 ? 0.0 : half;
    } else if (p >= size - 1) {
        scale = p > size - 1 ? 0.0 : half;
        p = size - 1;
    }
    const double nearest = std::round(p);
    if (std::abs(p - nearest) < kSnap) p = nearest;
    int i0 = static_cast<int>(std::floor(p));
    i0 = std::min(i0, size - 2);
    return {i0, p - i0, scale};
}

void check_shapes(const Image& image, const CoordGrid& grid) {
    if (image.rows != grid.rows || image.cols != grid.cols) {
        throw DomainError("grid shape does not match image shape");
    }
    if (image.rows < 2 || image.cols < 2) throw DomainError("resample needs at least a 2x2 image");
}

}  // namespace

CoordGrid uniform_grid(int rows, int cols) {
    if (rows < 2 || cols < 2) throw DomainError("uniform_grid needs at least 2x2");
    CoordGrid g(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const double y = -1.0 + 2.0 * r / (rows - 1);
        for (int c = 0; c < cols; ++c) {
            const double x = -1.0 + 2.0 * c / (cols - 1);
            const std::size_t p = 2 * (static_cast<std::size_t>(r) * cols + c);
            g.xy[p] = x;
            g.xy[p + 1] = y;
        }
    }
    return g;
}

Image resample(const Image& image, const CoordGrid& grid) {
    check_shapes(image, grid);
    const int ch = image.channels;
    Image out(grid.rows, grid.cols, ch);
    for (int p = 0; p < grid.pixels(); ++p) {
        const Tap tx = locate(grid.xy[2 * p], image.cols);
        const Tap ty = locate(grid.xy[2 * p + 1], image.rows);
        const double w00 = (1 - ty.f) * (1 - tx.f), w01 = (1 - ty.f) * tx.f;
        const double w10 = ty.f * (1 - tx.f), w11 = ty.f * tx.f;
        const double* a = &image.data[(static_cast<std::size_t>(ty.i0) * image.cols + tx.i0) * ch];
        const double* b = a + static_cast<std::size_t>(image.cols) * ch;
        double* o = &out.data[static_cast<std::size_t>(p) * ch];
        for (int k = 0; k < ch; ++k) o[k] = w00 * a[k] + w01 * a[ch + k] + w10 * b[k] + w11 * b[ch + k];
    }
    return out;
}

void resample_backward(const Image& image, const CoordGrid& grid, const Image& grad_out, Image* grad_image,
                       CoordGrid* grad_grid) {
    check_shapes(image, grid);
    if (!grad_out.same_shape(image)) throw DomainError("gradient shape does not match resample output");
    if (grad_image && !grad_image->same_shape(image)) *grad_image = Image(image.rows, image.cols, image.channels);
    if (grad_grid && (grad_grid->rows != grid.rows || grad_grid->cols != grid.cols)) {
        *grad_grid = CoordGrid(grid.rows, grid.cols);
    }
    const int ch = image.channels;
    for (int p = 0; p < grid.pixels(); ++p) {
        const Tap tx = locate(grid.xy[2 * p], image.cols);
        const Tap ty = locate(grid.xy[2 * p + 1], image.rows);
        const std::size_t ia = (static_cast<std::size_t>(ty.i0) * image.cols + tx.i0) * ch;
        const std::size_t ib = ia + static_cast<std::size_t>(image.cols) * ch;
        const double* g = &grad_out.data[static_cast<std::size_t>(p) * ch];
        if (grad_image) {
            const double w00 = (1 - ty.f) * (1 - tx.f), w01 = (1 - ty.f) * tx.f;
            const double w10 = ty.f * (1 - tx.f), w11 = ty.f * tx.f;
            double* d = grad_image->data.data();
            for (int k = 0; k < ch; ++k) {
                d[ia + k] += w00 * g[k];
                d[ia + ch + k] += w01 * g[k];
                d[ib + k] += w10 * g[k];
                d[ib + ch + k] += w11 * g[k];
            }
        }
        if (grad_grid) {
            const double* a = &image.data[ia];
            const double* b = &image.data[ib];
            double gx = 0.0, gy = 0.0;
            for (int k = 0; k < ch; ++k) {
                const double dvx = (1 - ty.f) * (a[ch + k] - a[k]) + ty.f * (b[ch + k] - b[k]);
                const double dvy = (1 - tx.f) * (b[k] - a[k]) + tx.f * (b[ch + k] - a[ch + k]);
                gx += g[k] * dvx;
                gy += g[k] * dvy;
            }
            grad_grid->xy[2 * p] += gx * tx.scale;
            grad_grid->xy[2 * p + 1] += gy * ty.scale;
        }
    }
}

CoordGrid tilt_field_to_grid(const TiltField& tilts) {
    CoordGrid g = uniform_grid(tilts.rows, tilts.cols);
    const double sx = 2.0 / (tilts.cols - 1);
    const double sy = 2.0 / (tilts.rows - 1);
    for (std::size_t p = 0; p < g.xy.size(); p += 2) {
        g.xy[p] += sx * tilts.shift[p];
        g.xy[p + 1] += sy * tilts.shift[p + 1];
    }
    return g;
}

TiltField grid_to_tilt_field(const CoordGrid& grid) {
    const CoordGrid u = uniform_grid(grid.rows, grid.cols);
    TiltField t(grid.rows, grid.cols);
    const double sx = 0.5 * (grid.cols - 1);
    const double sy = 0.5 * (grid.rows - 1);
    for (std::size_t p = 0; p < grid.xy.size(); p += 2) {
        t.shift[p] = (grid.xy[p] - u.xy[p]) * sx;
        t.shift[p + 1] = (grid.xy[p + 1] - u.xy[p + 1]) * sy;
    }
    return t;
}

}  // namespace nert::warp
