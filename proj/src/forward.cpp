#include "nert/forward.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nert/container.hpp"
#include "nert/errors.hpp"
#include "nert/rng.hpp"

namespace nert::forward {

namespace {

void check_kernel_fits(int kernel_size, int rows, int cols) {
    if (kernel_size > rows || kernel_size > cols) {
        throw DomainError("PSF kernel of size " + std::to_string(kernel_size) + " exceeds image " +
                          std::to_string(rows) + "x" + std::to_string(cols));
    }
}

// Edge-replicated planar copy of `image` with a border of `h` pixels:
// plane j holds channel j as (rows + 2h) x (cols + 2h).
std::vector<double> pad_planar(const Image& image, int h) {
    const int pr = image.rows + 2 * h, pc = image.cols + 2 * h, ch = image.channels;
    std::vector<double> out(static_cast<std::size_t>(pr) * pc * ch);
    const std::size_t plane = static_cast<std::size_t>(pr) * pc;
    for (int r = 0; r < pr; ++r) {
        const int sr = std::clamp(r - h, 0, image.rows - 1);
        for (int c = 0; c < pc; ++c) {
            const int sc = std::clamp(c - h, 0, image.cols - 1);
            for (int j = 0; j < ch; ++j) {
                out[j * plane + static_cast<std::size_t>(r) * pc + c] = image(sr, sc, j);
            }
        }
    }
    return out;
}

std::vector<double> planar(const Image& image) {
    const std::size_t plane = static_cast<std::size_t>(image.pixels());
    std::vector<double> out(image.size());
    for (std::size_t p = 0; p < plane; ++p)
        for (int j = 0; j < image.channels; ++j) out[j * plane + p] = image.data[p * image.channels + j];
    return out;
}

void check_field(const Image& image, const PsfField& psfs) {
    if (image.rows != psfs.rows || image.cols != psfs.cols) throw DomainError("PSF field does not match image");
    if (psfs.kernels.rows() != psfs.kernel_size * psfs.kernel_size || psfs.kernels.cols() != image.pixels()) {
        throw DomainError("PSF field has inconsistent kernel storage");
    }
    check_kernel_fits(psfs.kernel_size, image.rows, image.cols);
}

double sample_bilinear(const Image& img, double r, double c, int ch) {
    r = std::clamp(r, 0.0, img.rows - 1.0);
    c = std::clamp(c, 0.0, img.cols - 1.0);
    const int r0 = std::min(static_cast<int>(std::floor(r)), img.rows - 2);
    const int c0 = std::min(static_cast<int>(std::floor(c)), img.cols - 2);
    const double fr = r - r0, fc = c - c0;
    return (1 - fr) * ((1 - fc) * img(r0, c0, ch) + fc * img(r0, c0 + 1, ch)) +
           fr * ((1 - fc) * img(r0 + 1, c0, ch) + fc * img(r0 + 1, c0 + 1, ch));
}

}  // namespace

PsfField psf_field_analytic(const ZernikeField& field, optics::PupilPsf& pupil) {
    if (static_cast<int>(pupil.modes().size()) != field.num_modes) throw DomainError("pupil/field mode count mismatch");
    const Eigen::MatrixXd coeffs = upsample_coefficients(field);
    PsfField out{field.layout.rows, field.layout.cols, pupil.kernel_size(), {}};
    check_kernel_fits(out.kernel_size, out.rows, out.cols);
    out.kernels.resize(out.kernel_size * out.kernel_size, field.layout.pixels());
    for (int p = 0; p < field.layout.pixels(); ++p) {
        const auto k = pupil.psf(std::span<const double>(coeffs.col(p).data(), static_cast<std::size_t>(coeffs.rows())));
        out.kernels.col(p) = Eigen::Map<const Eigen::VectorXd>(k.data(), static_cast<Eigen::Index>(k.size()));
    }
    return out;
}

PsfField psf_field_from_basis(const ZernikeField& field, const optics::PsfBasis& basis, optics::PupilPsf& pupil,
                              BasisPsfCache* cache) {
    if (pupil.kernel_size() != basis.kernel_size()) throw DomainError("pupil/basis kernel size mismatch");
    if (static_cast<int>(pupil.modes().size()) != field.num_modes) throw DomainError("pupil/field mode count mismatch");
    const ControlLayout& layout = field.layout;
    check_kernel_fits(basis.kernel_size(), layout.rows, layout.cols);

    Eigen::MatrixXd beta(basis.size(), layout.points());
    for (int i = 0; i < layout.points(); ++i) {
        const auto k = pupil.psf(field.at(i));
        beta.col(i) = basis.project(Eigen::Map<const Eigen::VectorXd>(k.data(), static_cast<Eigen::Index>(k.size())));
    }
    const Eigen::MatrixXd beta_px = ControlUpsampler(layout).upsample(beta);

    PsfField out{layout.rows, layout.cols, basis.kernel_size(), {}};
    Eigen::MatrixXd raw = basis.components * beta_px;
    raw.colwise() += basis.mean;
    out.kernels = raw.cwiseMax(0.0);
    Eigen::VectorXd mass = out.kernels.colwise().sum().transpose();
    const Eigen::Index centre = out.kernels.rows() / 2;
    for (Eigen::Index p = 0; p < out.kernels.cols(); ++p) {
        if (mass[p] > 0.0) {
            out.kernels.col(p) /= mass[p];
        } else {
            out.kernels(centre, p) = 1.0;
        }
    }
    if (cache) {
        cache->raw = std::move(raw);
        cache->mass = std::move(mass);
    }
    return out;
}

std::vector<double> psf_field_from_basis_backward(const ZernikeField& field, const optics::PsfBasis& basis,
                                                  optics::PupilPsf& pupil, const BasisPsfCache& cache,
                                                  const Eigen::MatrixXd& grad_kernels) {
    const ControlLayout& layout = field.layout;
    const Eigen::Index d = cache.raw.rows();
    Eigen::MatrixXd grad_raw = Eigen::MatrixXd::Zero(d, cache.raw.cols());
    for (Eigen::Index p = 0; p < cache.raw.cols(); ++p) {
        const double s = cache.mass[p];
        if (!(s > 0.0)) continue;
        double gk = 0.0;
        for (Eigen::Index t = 0; t < d; ++t) {
            if (cache.raw(t, p) > 0.0) gk += grad_kernels(t, p) * cache.raw(t, p);
        }
        gk /= s * s;
        for (Eigen::Index t = 0; t < d; ++t) {
            if (cache.raw(t, p) > 0.0) grad_raw(t, p) = grad_kernels(t, p) / s - gk;
        }
    }
    const Eigen::MatrixXd grad_beta_px = basis.components.transpose() * grad_raw;
    const Eigen::MatrixXd grad_beta = ControlUpsampler(layout).adjoint(grad_beta_px);
    std::vector<double> grad(field.coeffs.size(), 0.0);
    for (int i = 0; i < layout.points(); ++i) {
        const Eigen::VectorXd grad_psf = basis.components * grad_beta.col(i);
        const auto g = pupil.psf_backward(field.at(i), std::span<const double>(grad_psf.data(), grad_psf.size()));
        std::copy(g.begin(), g.end(), grad.begin() + static_cast<std::ptrdiff_t>(i) * field.num_modes);
    }
    return grad;
}

// Both directions walk the same index pattern: output pixel (r, c) and tap
// (a, b) read padded pixel (r + 2h - a, c + 2h - b), i.e. in(r - (a - h), c - (b - h)).
// Work is done on planar channels so the inner loops run over contiguous columns.
Image apply_psf_field(const Image& image, const PsfField& psfs) {
    check_field(image, psfs);
    const int k = psfs.kernel_size, h = k / 2, ch = image.channels, rows = image.rows, cols = image.cols;
    const int pc = cols + 2 * h;
    const std::size_t pplane = static_cast<std::size_t>(rows + 2 * h) * pc, plane = image.pixels();
    const std::vector<double> pad = pad_planar(image, h);
    const Eigen::MatrixXd kt = psfs.kernels.transpose();  // pixels x taps
    std::vector<double> acc(image.size(), 0.0);
    for (int t = 0; t < k * k; ++t) {
        const int a = t / k, b = t % k;
        for (int r = 0; r < rows; ++r) {
            const double* w = kt.col(t).data() + static_cast<std::size_t>(r) * cols;
            const std::size_t src = static_cast<std::size_t>(r + 2 * h - a) * pc + 2 * h - b;
            for (int j = 0; j < ch; ++j) {
                const double* in = &pad[j * pplane + src];
                double* o = &acc[j * plane + static_cast<std::size_t>(r) * cols];
                for (int c = 0; c < cols; ++c) o[c] += w[c] * in[c];
            }
        }
    }
    Image out(rows, cols, ch);
    for (std::size_t p = 0; p < plane; ++p)
        for (int j = 0; j < ch; ++j) out.data[p * ch + j] = acc[j * plane + p];
    return out;
}

void apply_psf_field_backward(const Image& image, const PsfField& psfs, const Image& grad_out, Image* grad_image,
                              Eigen::MatrixXd* grad_kernels) {
    check_field(image, psfs);
    if (!grad_out.same_shape(image)) throw DomainError("gradient shape does not match blur output");
    if (grad_image && !grad_image->same_shape(image)) *grad_image = Image(image.rows, image.cols, image.channels);
    if (grad_kernels && (grad_kernels->rows() != psfs.kernels.rows() || grad_kernels->cols() != psfs.kernels.cols())) {
        *grad_kernels = Eigen::MatrixXd::Zero(psfs.kernels.rows(), psfs.kernels.cols());
    }
    const int k = psfs.kernel_size, h = k / 2, ch = image.channels, cols = image.cols, rows = image.rows;
    const int pc = cols + 2 * h, pr = rows + 2 * h;
    const std::size_t pplane = static_cast<std::size_t>(pr) * pc, plane = image.pixels();
    const std::vector<double> pad = pad_planar(image, h);
    const std::vector<double> g = planar(grad_out);
    const Eigen::MatrixXd kt = psfs.kernels.transpose();
    Eigen::MatrixXd gkt;
    if (grad_kernels) gkt = Eigen::MatrixXd::Zero(kt.rows(), kt.cols());
    std::vector<double> gpad;
    if (grad_image) gpad.assign(pplane * ch, 0.0);
    for (int t = 0; t < k * k; ++t) {
        const int a = t / k, b = t % k;
        for (int r = 0; r < rows; ++r) {
            const std::size_t row = static_cast<std::size_t>(r) * cols;
            const std::size_t src = static_cast<std::size_t>(r + 2 * h - a) * pc + 2 * h - b;
            const double* w = kt.col(t).data() + row;
            double* gw = grad_kernels ? gkt.col(t).data() + row : nullptr;
            for (int j = 0; j < ch; ++j) {
                const double* in = &pad[j * pplane + src];
                const double* gr = &g[j * plane + row];
                if (gw) {
                    for (int c = 0; c < cols; ++c) gw[c] += gr[c] * in[c];
                }
                if (grad_image) {
                    double* gi = &gpad[j * pplane + src];
                    for (int c = 0; c < cols; ++c) gi[c] += w[c] * gr[c];
                }
            }
        }
    }
    if (grad_kernels) *grad_kernels += gkt.transpose();
    if (grad_image) {
        // Fold the border back onto the edge pixels it replicated.
        for (int r = 0; r < pr; ++r) {
            const int sr = std::clamp(r - h, 0, rows - 1);
            for (int c = 0; c < pc; ++c) {
                const int sc = std::clamp(c - h, 0, cols - 1);
                for (int j = 0; j < ch; ++j) {
                    (*grad_image)(sr, sc, j) += gpad[j * pplane + static_cast<std::size_t>(r) * pc + c];
                }
            }
        }
    }
}

PsfField make_psf_field(const ZernikeField& field, const optics::PsfBasis& basis, PsfPath path) {
    optics::PupilPsf pupil(basis.kernel_size(), field.num_modes, basis.pupil_resolution);
    if (path == PsfPath::Analytic) return psf_field_analytic(field, pupil);
    return psf_field_from_basis(field, basis, pupil);
}

Image apply_spatially_varying_blur(const Image& image, const ZernikeField& field, const optics::PsfBasis& basis,
                                   PsfPath path) {
    if (field.layout.rows != image.rows || field.layout.cols != image.cols) {
        throw DomainError("blur field does not match image");
    }
    return apply_psf_field(image, make_psf_field(field, basis, path));
}

Image render_tilt_then_blur(const Image& clean, const CoordGrid& tilt_grid, const PsfField& psfs) {
    return apply_psf_field(warp::resample(clean, tilt_grid), psfs);
}

Image render_blur_then_tilt(const Image& clean, const CoordGrid& tilt_grid, const PsfField& psfs) {
    return warp::resample(apply_psf_field(clean, psfs), tilt_grid);
}

Image render_tilt_then_blur(const Image& clean, const DistortionSample& sample, const optics::PsfBasis& basis,
                            PsfPath path) {
    return render_tilt_then_blur(clean, sample.tilt_grid, make_psf_field(sample.blur_field, basis, path));
}

Image render_blur_then_tilt(const Image& clean, const DistortionSample& sample, const optics::PsfBasis& basis,
                            PsfPath path) {
    return render_blur_then_tilt(clean, sample.tilt_grid, make_psf_field(sample.blur_field, basis, path));
}

Image model_discrepancy(const Image& clean, const CoordGrid& tilt_grid, const PsfField& psfs) {
    const Image a = render_tilt_then_blur(clean, tilt_grid, psfs);
    const Image b = render_blur_then_tilt(clean, tilt_grid, psfs);
    Image out(clean.rows, clean.cols, 1);
    for (int p = 0; p < clean.pixels(); ++p) {
        double s = 0.0;
        for (int c = 0; c < clean.channels; ++c) {
            const std::size_t i = static_cast<std::size_t>(p) * clean.channels + c;
            s += std::abs(a.data[i] - b.data[i]);
        }
        out.data[p] = s;
    }
    return out;
}

Image model_discrepancy(const Image& clean, const DistortionSample& sample, const optics::PsfBasis& basis,
                        PsfPath path) {
    return model_discrepancy(clean, sample.tilt_grid, make_psf_field(sample.blur_field, basis, path));
}

namespace {

void check_invariant(const Image& clean, const TiltField& tilts, std::span<const double> kernel, int& ksize) {
    if (tilts.rows != clean.rows || tilts.cols != clean.cols) throw DomainError("tilt field does not match image");
    ksize = static_cast<int>(std::lround(std::sqrt(static_cast<double>(kernel.size()))));
    if (ksize * ksize != static_cast<int>(kernel.size()) || ksize % 2 == 0) {
        throw DomainError("kernel must be square with odd size");
    }
    check_kernel_fits(ksize, clean.rows, clean.cols);
}

// sum_j g(x_i - u_j) F(i, u_j) with taps u_j = x_i - d, edge-clamped.
template <typename F>
Image invariant_sum(const Image& clean, std::span<const double> kernel, int ksize, F&& value) {
    const int h = ksize / 2;
    Image out(clean.rows, clean.cols, clean.channels);
    for (int r = 0; r < clean.rows; ++r) {
        for (int c = 0; c < clean.cols; ++c) {
            for (int a = 0; a < ksize; ++a) {
                const int ur = std::clamp(r - (a - h), 0, clean.rows - 1);
                for (int b = 0; b < ksize; ++b) {
                    const int uc = std::clamp(c - (b - h), 0, clean.cols - 1);
                    const double g = kernel[a * ksize + b];
                    for (int ch = 0; ch < clean.channels; ++ch) out(r, c, ch) += g * value(r, c, ur, uc, ch);
                }
            }
        }
    }
    return out;
}

}  // namespace

Image invariant_tilt_then_blur(const Image& clean, const TiltField& tilts, std::span<const double> kernel) {
    int k = 0;
    check_invariant(clean, tilts, kernel, k);
    return invariant_sum(clean, kernel, k, [&](int, int, int ur, int uc, int ch) {
        return sample_bilinear(clean, ur + tilts.dy(ur, uc), uc + tilts.dx(ur, uc), ch);
    });
}

Image invariant_blur_then_tilt(const Image& clean, const TiltField& tilts, std::span<const double> kernel) {
    int k = 0;
    check_invariant(clean, tilts, kernel, k);
    return invariant_sum(clean, kernel, k, [&](int r, int c, int ur, int uc, int ch) {
        return sample_bilinear(clean, ur + tilts.dy(r, c), uc + tilts.dx(r, c), ch);
    });
}

Image invariant_first_order_difference(const Image& clean, const TiltField& tilts, std::span<const double> kernel) {
    int k = 0;
    check_invariant(clean, tilts, kernel, k);
    auto diff = [&](int r, int c, int ch, bool along_rows) {
        const int n = along_rows ? clean.rows : clean.cols;
        const int i = along_rows ? r : c;
        const int lo = std::max(i - 1, 0), hi = std::min(i + 1, n - 1);
        const double vlo = along_rows ? clean(lo, c, ch) : clean(r, lo, ch);
        const double vhi = along_rows ? clean(hi, c, ch) : clean(r, hi, ch);
        return (vhi - vlo) / (hi - lo);
    };
    return invariant_sum(clean, kernel, k, [&](int r, int c, int ur, int uc, int ch) {
        return diff(ur, uc, ch, false) * (tilts.dx(r, c) - tilts.dx(ur, uc)) +
               diff(ur, uc, ch, true) * (tilts.dy(r, c) - tilts.dy(ur, uc));
    });
}

SimulatedStack simulate_stack(const Image& clean, const optics::TurbulenceParams& params, int n_frames,
                              std::uint64_t seed, const SimulationOptions& options) {
    if (n_frames < 1) throw DomainError("simulate_stack needs at least one frame");
    params.validate();
    optics::PupilPsf pupil(params.kernel_size, options.num_modes, options.pupil_resolution);
    SimulatedStack out;
    out.frames.reserve(n_frames);
    out.truth.reserve(n_frames);
    for (int k = 0; k < n_frames; ++k) {
        const auto field = optics::sample_correlated_field(params, clean.rows, clean.cols, options.num_modes,
                                                           derive_seed(seed, Stream::Frame, k),
                                                           options.control_spacing);
        DistortionSample sample{warp::tilt_field_to_grid(field.tilt), field.blur, k};
        const PsfField psfs = psf_field_analytic(sample.blur_field, pupil);
        out.frames.push_back(render_tilt_then_blur(clean, sample.tilt_grid, psfs));
        out.truth.push_back(std::move(sample));
    }
    return out;
}

void save_distortions(const std::vector<DistortionSample>& truth, const std::filesystem::path& path) {
    io::ArrayContainer c;
    c.magic = "nert-distortions-v1";
    c.metadata["frames"] = truth.size();
    for (const auto& s : truth) {
        const std::string k = std::to_string(s.frame_index);
        const auto& L = s.blur_field.layout;
        c.put("tilt_grid_" + k, {static_cast<std::uint64_t>(s.tilt_grid.rows), static_cast<std::uint64_t>(s.tilt_grid.cols), 2},
              s.tilt_grid.xy);
        c.put("blur_" + k,
              {static_cast<std::uint64_t>(L.ctrl_rows), static_cast<std::uint64_t>(L.ctrl_cols),
               static_cast<std::uint64_t>(s.blur_field.num_modes)},
              s.blur_field.coeffs);
        c.metadata["layout_" + k] = {L.rows, L.cols, L.spacing};
    }
    c.save(path);
}

std::vector<DistortionSample> load_distortions(const std::filesystem::path& path) {
    const auto c = io::ArrayContainer::load(path, "nert-distortions-v1");
    const auto n = c.metadata.at("frames").get<std::size_t>();
    std::vector<DistortionSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string k = std::to_string(i);
        const auto& g = c.at("tilt_grid_" + k);
        const auto& b = c.at("blur_" + k);
        const auto lay = c.metadata.at("layout_" + k).get<std::vector<int>>();
        DistortionSample s;
        s.frame_index = static_cast<int>(i);
        s.tilt_grid = CoordGrid(static_cast<int>(g.shape[0]), static_cast<int>(g.shape[1]));
        s.tilt_grid.xy = g.values;
        s.blur_field = ZernikeField(ControlLayout::for_image(lay.at(0), lay.at(1), lay.at(2)), static_cast<int>(b.shape[2]));
        if (s.blur_field.coeffs.size() != b.values.size()) throw DataError("blur field size mismatch in " + path.string());
        s.blur_field.coeffs = b.values;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace nert::forward
