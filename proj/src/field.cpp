#include "nert/field.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "nert/errors.hpp"
#include "nert/rng.hpp"

namespace nert {

ControlLayout ControlLayout::for_image(int rows, int cols, int spacing) {
    if (rows < 2 || cols < 2) throw DomainError("control lattice needs an image of at least 2x2");
    if (spacing < 1) throw DomainError("control spacing must be positive");
    auto count = [spacing](int size) { return std::max(2, (size - 1 + spacing - 1) / spacing + 1); };
    return {rows, cols, count(rows), count(cols), spacing};
}

std::array<double, 2> ControlLayout::position(int ctrl_index) const {
    const int i = ctrl_index / ctrl_cols;
    const int j = ctrl_index % ctrl_cols;
    return {i * (rows - 1.0) / (ctrl_rows - 1.0), j * (cols - 1.0) / (ctrl_cols - 1.0)};
}

ZernikeField::ZernikeField(ControlLayout layout_, int num_modes_)
    : layout(layout_), num_modes(num_modes_),
      coeffs(static_cast<std::size_t>(layout_.points()) * num_modes_, 0.0) {
    if (num_modes_ < 1) throw DomainError("ZernikeField needs at least one mode");
}

TiltField::TiltField(int rows_, int cols_, double dx_, double dy_) : rows(rows_), cols(cols_) {
    shift.resize(2 * static_cast<std::size_t>(rows_) * cols_);
    for (std::size_t p = 0; p < shift.size(); p += 2) {
        shift[p] = dx_;
        shift[p + 1] = dy_;
    }
}

ControlUpsampler::ControlUpsampler(const ControlLayout& layout) : layout_(layout) {
    index_.resize(layout.pixels());
    weight_.resize(layout.pixels());
    const double sr = (layout.ctrl_rows - 1.0) / (layout.rows - 1.0);
    const double sc = (layout.ctrl_cols - 1.0) / (layout.cols - 1.0);
    for (int r = 0; r < layout.rows; ++r) {
        const double u = r * sr;
        const int i0 = std::min(static_cast<int>(std::floor(u)), layout.ctrl_rows - 2);
        const double fu = u - i0;
        for (int c = 0; c < layout.cols; ++c) {
            const double v = c * sc;
            const int j0 = std::min(static_cast<int>(std::floor(v)), layout.ctrl_cols - 2);
            const double fv = v - j0;
            const int p = r * layout.cols + c;
            const int base = i0 * layout.ctrl_cols + j0;
            index_[p] = {base, base + 1, base + layout.ctrl_cols, base + layout.ctrl_cols + 1};
            weight_[p] = {(1 - fu) * (1 - fv), (1 - fu) * fv, fu * (1 - fv), fu * fv};
        }
    }
}

Eigen::MatrixXd ControlUpsampler::upsample(const Eigen::Ref<const Eigen::MatrixXd>& values) const {
    if (values.cols() != layout_.points()) throw DomainError("control values do not match the lattice");
    Eigen::MatrixXd out(values.rows(), layout_.pixels());
    for (int p = 0; p < layout_.pixels(); ++p) {
        const auto& idx = index_[p];
        const auto& w = weight_[p];
        out.col(p) = w[0] * values.col(idx[0]) + w[1] * values.col(idx[1]) + w[2] * values.col(idx[2]) +
                     w[3] * values.col(idx[3]);
    }
    return out;
}

Eigen::MatrixXd ControlUpsampler::adjoint(const Eigen::Ref<const Eigen::MatrixXd>& pixel_values) const {
    if (pixel_values.cols() != layout_.pixels()) throw DomainError("pixel values do not match the image");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(pixel_values.rows(), layout_.points());
    for (int p = 0; p < layout_.pixels(); ++p) {
        for (int t = 0; t < 4; ++t) out.col(index_[p][t]) += weight_[p][t] * pixel_values.col(p);
    }
    return out;
}

Eigen::MatrixXd upsample_coefficients(const ZernikeField& field) {
    Eigen::Map<const Eigen::MatrixXd> ctrl(field.coeffs.data(), field.num_modes, field.layout.points());
    return ControlUpsampler(field.layout).upsample(ctrl);
}

namespace optics {

std::vector<double> blur_mode_variances(double d_over_r0, int num_modes) {
    const double s = std::pow(d_over_r0, 5.0 / 3.0);
    std::vector<double> out(static_cast<std::size_t>(num_modes));
    for (int k = 0; k < num_modes; ++k) out[k] = kolmogorov_variance(kFirstBlurMode + k) * s;
    return out;
}

Eigen::MatrixXd correlation_factor(const ControlLayout& layout, double corr) {
    if (!(corr < 0.0)) throw DomainError("corr must be negative");
    const double ell = -layout.spacing / corr;
    const int n = layout.points();
    Eigen::MatrixXd cov(n, n);
    for (int a = 0; a < n; ++a) {
        const auto pa = layout.position(a);
        for (int b = 0; b < n; ++b) {
            const auto pb = layout.position(b);
            const double d2 = (pa[0] - pb[0]) * (pa[0] - pb[0]) + (pa[1] - pb[1]) * (pa[1] - pb[1]);
            cov(a, b) = std::exp(-d2 / (2.0 * ell * ell));
        }
    }
    // Nearly rank-one at strong correlation, so factor through the spectrum.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

CorrelatedField sample_correlated_field(const TurbulenceParams& params, int rows, int cols, int num_modes,
                                        std::uint64_t seed, int spacing) {
    params.validate();
    if (num_modes < 1) throw DomainError("need at least one blur mode");
    const ControlLayout layout = ControlLayout::for_image(rows, cols, spacing);
    const Eigen::MatrixXd factor = correlation_factor(layout, params.corr);
    const int n = layout.points();

    Rng rng = make_rng(seed, Stream::Field);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw_channel = [&](double sigma) {
        Eigen::VectorXd z(n);
        for (int i = 0; i < n; ++i) z[i] = normal(rng);
        return Eigen::VectorXd(sigma * (factor * z));
    };

    CorrelatedField out;
    const double tilt_sigma = tilt_sigma_pixels(params.d_over_r0);
    Eigen::MatrixXd tilt_ctrl(2, n);
    tilt_ctrl.row(0) = draw_channel(tilt_sigma).transpose();
    tilt_ctrl.row(1) = draw_channel(tilt_sigma).transpose();

    out.blur = ZernikeField(layout, num_modes);
    const auto variances = blur_mode_variances(params.d_over_r0, num_modes);
    Eigen::Map<Eigen::MatrixXd> coeffs(out.blur.coeffs.data(), num_modes, n);
    for (int k = 0; k < num_modes; ++k) coeffs.row(k) = draw_channel(std::sqrt(variances[k])).transpose();

    const Eigen::MatrixXd tilt = ControlUpsampler(layout).upsample(tilt_ctrl);
    out.tilt = TiltField(rows, cols);
    std::copy(tilt.data(), tilt.data() + tilt.size(), out.tilt.shift.begin());
    return out;
}

}  // namespace optics
}  // namespace nert
