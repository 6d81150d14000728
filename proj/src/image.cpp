#include "nert/image.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "nert/errors.hpp"

namespace nert {

Image::Image(int rows_, int cols_, int channels_, double fill)
    : rows(rows_), cols(cols_), channels(channels_) {
    if (rows_ < 0 || cols_ < 0 || channels_ < 0) {
        throw DomainError("image dimensions must be non-negative");
    }
    data.assign(static_cast<std::size_t>(rows_) * cols_ * channels_, fill);
}

double Image::mean() const {
    if (data.empty()) return 0.0;
    return std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
}

double Image::min() const { return data.empty() ? 0.0 : *std::min_element(data.begin(), data.end()); }

double Image::max() const { return data.empty() ? 0.0 : *std::max_element(data.begin(), data.end()); }

void require_uniform(const FrameStack& frames, int min_count) {
    if (static_cast<int>(frames.size()) < min_count) {
        throw DomainError("need at least " + std::to_string(min_count) + " frames, got " +
                          std::to_string(frames.size()));
    }
    for (const auto& f : frames) {
        if (f.empty()) throw DomainError("empty frame in stack");
        if (!f.same_shape(frames.front())) throw DomainError("frames differ in shape");
    }
}

Image clamped(Image image, double lo, double hi) {
    for (double& v : image.data) v = std::clamp(v, lo, hi);
    return image;
}

Image channel_sum(const Image& image) {
    Image out(image.rows, image.cols, 1);
    for (int p = 0; p < image.pixels(); ++p) {
        double s = 0.0;
        for (int ch = 0; ch < image.channels; ++ch) s += image.data[static_cast<std::size_t>(p) * image.channels + ch];
        out.data[p] = s;
    }
    return out;
}

Image luminance(const Image& image) {
    Image out = channel_sum(image);
    if (image.channels > 0) {
        for (double& v : out.data) v /= image.channels;
    }
    return out;
}

}  // namespace nert
