#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace nert {

/// Interleaved (row-major, channel-last) floating point image.
///
/// With `channels` interleaved per pixel the buffer doubles as a column-major
/// `channels x (rows*cols)` matrix, which is how the networks consume it.
struct Image {
    int rows = 0;
    int cols = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int rows, int cols, int channels, double fill = 0.0);

    double& operator()(int r, int c, int ch) {
        return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
    }
    double operator()(int r, int c, int ch) const {
        return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
    }

    int pixels() const { return rows * cols; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Image& other) const {
        return rows == other.rows && cols == other.cols && channels == other.channels;
    }

    Eigen::Map<Eigen::MatrixXd> matrix() { return {data.data(), channels, pixels()}; }
    Eigen::Map<const Eigen::MatrixXd> matrix() const { return {data.data(), channels, pixels()}; }

    double mean() const;
    double min() const;
    double max() const;
};

using FrameStack = std::vector<Image>;

/// Throws DomainError unless every frame is non-empty and shares one shape.
void require_uniform(const FrameStack& frames, int min_count);

/// Per-channel clamp into [lo, hi].
Image clamped(Image image, double lo = 0.0, double hi = 1.0);

/// Channel sum collapsed to a single-channel image.
Image channel_sum(const Image& image);

/// Unweighted channel mean collapsed to a single-channel image.
Image luminance(const Image& image);

}  // namespace nert
