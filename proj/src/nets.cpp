#include "nert/nets.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "nert/errors.hpp"
#include "nert/rng.hpp"

namespace nert::nets {

ParameterGroup::ParameterGroup(std::string name_, Eigen::Index size)
    : name(std::move(name_)),
      value(Eigen::VectorXd::Zero(size)),
      grad(Eigen::VectorXd::Zero(size)),
      m(Eigen::VectorXd::Zero(size)),
      v(Eigen::VectorXd::Zero(size)) {}

void adam_step(ParameterGroup& g, double lr, const AdamOptions& o) {
    ++g.step;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(g.step));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(g.step));
    g.m = o.beta1 * g.m + (1.0 - o.beta1) * g.grad;
    g.v = o.beta2 * g.v + (1.0 - o.beta2) * g.grad.cwiseAbs2();
    const double step = lr / bc1;
    const double root_bc2 = std::sqrt(bc2);
    g.value.array() -= step * g.m.array() / (g.v.array().sqrt() / root_bc2 + o.eps);
}

int encoding_dim(int bands) { return 4 * bands + 2; }

Eigen::MatrixXd positional_encoding(const Eigen::Ref<const Eigen::MatrixXd>& coords, int bands) {
    if (bands < 0) throw DomainError("positional encoding needs L >= 0");
    if (coords.rows() != 2) throw DomainError("positional encoding expects 2 x P coordinates");
    Eigen::MatrixXd out(encoding_dim(bands), coords.cols());
    out.topRows(2) = coords;
    double freq = std::numbers::pi;
    for (int k = 0; k < bands; ++k, freq *= 2.0) {
        out.middleRows(2 + 4 * k, 2) = (freq * coords.array()).sin().matrix();
        out.middleRows(4 + 4 * k, 2) = (freq * coords.array()).cos().matrix();
    }
    return out;
}

// ---------------------------------------------------------------------------

Mlp::Mlp(std::vector<int> widths, std::string name) {
    if (widths.size() < 2) throw DomainError("MLP needs at least one layer");
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        layers_.push_back({widths[l], widths[l + 1], offset});
        offset += static_cast<Eigen::Index>(widths[l]) * widths[l + 1] + widths[l + 1];
    }
    params_ = ParameterGroup(std::move(name), offset);
}

void Mlp::init_uniform(std::uint64_t seed) {
    Rng rng = make_rng(seed, Stream::Weights);
    for (const auto& L : layers_) {
        std::uniform_real_distribution<double> u(-1.0 / std::sqrt(L.in), 1.0 / std::sqrt(L.in));
        const Eigen::Index n = static_cast<Eigen::Index>(L.in) * L.out + L.out;
        for (Eigen::Index i = 0; i < n; ++i) params_.value[L.offset + i] = u(rng);
    }
}

Eigen::MatrixXd Mlp::forward(const Eigen::Ref<const Eigen::MatrixXd>& x, Cache* cache) const {
    if (x.rows() != layers_.front().in) throw DomainError("MLP input width mismatch");
    Eigen::MatrixXd h = x;
    if (cache) cache->inputs.clear();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& L = layers_[l];
        Eigen::Map<const Eigen::MatrixXd> W(params_.value.data() + L.offset, L.out, L.in);
        Eigen::Map<const Eigen::VectorXd> b(params_.value.data() + L.offset + W.size(), L.out);
        Eigen::MatrixXd y = W * h;
        y.colwise() += b;
        if (l + 1 < layers_.size()) y = y.cwiseMax(0.0);
        if (cache) {
            cache->inputs.push_back(std::move(h));
        }
        h = std::move(y);
    }
    return h;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, Eigen::MatrixXd g, bool want_input_grad) {
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& L = layers_[l];
        const Eigen::MatrixXd& x = cache.inputs[l];
        Eigen::Map<const Eigen::MatrixXd> W(params_.value.data() + L.offset, L.out, L.in);
        Eigen::Map<Eigen::MatrixXd> dW(params_.grad.data() + L.offset, L.out, L.in);
        Eigen::Map<Eigen::VectorXd> db(params_.grad.data() + L.offset + W.size(), L.out);
        dW.noalias() += g * x.transpose();
        db += g.rowwise().sum();
        if (l == 0 && !want_input_grad) return {};
        Eigen::MatrixXd gx = W.transpose() * g;
        if (l > 0) gx = (x.array() > 0.0).select(gx, 0.0);
        g = std::move(gx);
    }
    return g;
}

// ---------------------------------------------------------------------------

ImageGenerator::ImageGenerator(int bands, int width, std::uint64_t seed)
    : bands_(bands), width_(width),
      mlp_({encoding_dim(bands), width, width, width, width, 3}, "generator") {
    if (bands < 0 || width < 1) throw ConfigError("generator needs L >= 0 and a positive width");
    mlp_.init_uniform(seed);
}

Image ImageGenerator::generate(const CoordGrid& grid, Cache* cache) const {
    Eigen::MatrixXd enc = positional_encoding(grid.matrix(), bands_);
    Eigen::MatrixXd y = mlp_.forward(enc, cache ? &cache->mlp : nullptr);
    y = (1.0 + (-y.array()).exp()).inverse().matrix();
    Image out(grid.rows, grid.cols, 3);
    out.matrix() = y;
    if (cache) {
        cache->encoded = std::move(enc);
        cache->output = std::move(y);
    }
    return out;
}

void ImageGenerator::backward(const CoordGrid& grid, const Cache& cache, const Image& grad_image,
                              CoordGrid* grad_grid) {
    Eigen::MatrixXd g = grad_image.matrix().array() * cache.output.array() * (1.0 - cache.output.array());
    const Eigen::MatrixXd genc = mlp_.backward(cache.mlp, std::move(g), grad_grid != nullptr);
    if (!grad_grid) return;
    if (grad_grid->rows != grid.rows || grad_grid->cols != grid.cols) *grad_grid = CoordGrid(grid.rows, grid.cols);
    auto out = grad_grid->matrix();
    out += genc.topRows(2);
    double freq = std::numbers::pi;
    for (int k = 0; k < bands_; ++k, freq *= 2.0) {
        const auto s = cache.encoded.middleRows(2 + 4 * k, 2).array();
        const auto c = cache.encoded.middleRows(4 + 4 * k, 2).array();
        out.array() += freq * (genc.middleRows(2 + 4 * k, 2).array() * c - genc.middleRows(4 + 4 * k, 2).array() * s);
    }
}

// ---------------------------------------------------------------------------

GridDeformer::GridDeformer(int rows, int cols, int width, double max_displacement, std::uint64_t seed)
    : rows_(rows), cols_(cols), width_(width), max_disp_(max_displacement) {
    if (rows < 2 || cols < 2) throw DomainError("deformer grid must be at least 2x2");
    if (width < 1 || !(max_displacement > 0.0)) throw ConfigError("deformer needs positive width and displacement");
    const int widths[] = {2, width, width, width, 2};
    Eigen::Index offset = 0;
    for (int l = 0; l < 4; ++l) {
        layers_.push_back({widths[l], widths[l + 1], offset});
        offset += 9 * static_cast<Eigen::Index>(widths[l]) * widths[l + 1] + widths[l + 1];
    }
    params_ = ParameterGroup("deformer", offset);
    Rng rng = make_rng(seed, Stream::Weights);
    for (const auto& L : layers_) {
        const double bound = 1.0 / std::sqrt(9.0 * L.in);
        std::uniform_real_distribution<double> u(-bound, bound);
        const Eigen::Index n = 9 * static_cast<Eigen::Index>(L.in) * L.out + L.out;
        for (Eigen::Index i = 0; i < n; ++i) params_.value[L.offset + i] = u(rng);
    }
}

void GridDeformer::zero_last_layer() {
    const auto& L = layers_.back();
    params_.value.segment(L.offset, 9 * static_cast<Eigen::Index>(L.in) * L.out + L.out).setZero();
}

Eigen::MatrixXd GridDeformer::shifted(const Eigen::MatrixXd& x, int dr, int dc) const {
    // out(:, r, c) = x(:, r + dr, c + dc), zero outside
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    const int c0 = std::max(0, -dc), c1 = std::min(cols_, cols_ - dc);
    if (c1 <= c0) return out;
    for (int r = std::max(0, -dr); r < std::min(rows_, rows_ - dr); ++r) {
        const Eigen::Index dst = static_cast<Eigen::Index>(r) * cols_ + c0;
        const Eigen::Index src = static_cast<Eigen::Index>(r + dr) * cols_ + c0 + dc;
        out.middleCols(dst, c1 - c0) = x.middleCols(src, c1 - c0);
    }
    return out;
}

Eigen::MatrixXd GridDeformer::conv(const Conv& L, const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd y(L.out, x.cols());
    Eigen::Map<const Eigen::VectorXd> b(params_.value.data() + L.offset + 9 * L.in * L.out, L.out);
    y.colwise() = b;
    for (int t = 0; t < 9; ++t) {
        Eigen::Map<const Eigen::MatrixXd> W(params_.value.data() + L.offset + t * L.in * L.out, L.out, L.in);
        y.noalias() += W * shifted(x, t / 3 - 1, t % 3 - 1);
    }
    return y;
}

Eigen::MatrixXd GridDeformer::conv_backward(const Conv& L, const Eigen::MatrixXd& x, const Eigen::MatrixXd& g,
                                            bool want_input_grad) {
    Eigen::Map<Eigen::VectorXd> db(params_.grad.data() + L.offset + 9 * L.in * L.out, L.out);
    db += g.rowwise().sum();
    Eigen::MatrixXd gx;
    if (want_input_grad) gx = Eigen::MatrixXd::Zero(L.in, x.cols());
    for (int t = 0; t < 9; ++t) {
        const int dr = t / 3 - 1, dc = t % 3 - 1;
        Eigen::Map<Eigen::MatrixXd> dW(params_.grad.data() + L.offset + t * L.in * L.out, L.out, L.in);
        dW.noalias() += g * shifted(x, dr, dc).transpose();
        if (want_input_grad) {
            Eigen::Map<const Eigen::MatrixXd> W(params_.value.data() + L.offset + t * L.in * L.out, L.out, L.in);
            gx += shifted(W.transpose() * g, -dr, -dc);
        }
    }
    return gx;
}

CoordGrid GridDeformer::deform(const CoordGrid& uniform, Cache* cache) const {
    if (uniform.rows != rows_ || uniform.cols != cols_) throw DomainError("deformer input grid shape mismatch");
    Eigen::MatrixXd h = uniform.matrix();
    if (cache) cache->inputs.clear();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Eigen::MatrixXd y = conv(layers_[l], h);
        if (l + 1 < layers_.size()) y = y.cwiseMax(0.0);
        if (cache) cache->inputs.push_back(std::move(h));
        h = std::move(y);
    }
    Eigen::MatrixXd t = h.array().tanh();
    CoordGrid out = uniform;
    out.matrix() += max_disp_ * t;
    if (cache) cache->tanh_out = std::move(t);
    return out;
}

void GridDeformer::backward(const Cache& cache, const CoordGrid& grad_grid) {
    Eigen::MatrixXd g = max_disp_ * grad_grid.matrix().array() * (1.0 - cache.tanh_out.array().square());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const Eigen::MatrixXd& x = cache.inputs[l];
        Eigen::MatrixXd gx = conv_backward(layers_[l], x, g, l > 0);
        if (l == 0) break;
        g = (x.array() > 0.0).select(gx, 0.0);
    }
}

// ---------------------------------------------------------------------------

BlurModule::BlurModule(std::shared_ptr<const optics::PsfBasis> basis, const ControlLayout& layout, int num_modes)
    : basis_(std::move(basis)), layout_(layout), num_modes_(num_modes) {
    if (!basis_) throw ConfigError("blur module needs a PSF basis");
    if (basis_->num_modes != num_modes) throw ConfigError("blur module mode count differs from the basis");
    pupil_ = std::make_unique<optics::PupilPsf>(basis_->kernel_size(), num_modes, basis_->pupil_resolution);
    params_ = ParameterGroup("alpha", static_cast<Eigen::Index>(layout.points()) * num_modes);
}

ZernikeField BlurModule::field() const {
    ZernikeField f(layout_, num_modes_);
    std::copy(params_.value.data(), params_.value.data() + params_.size(), f.coeffs.begin());
    return f;
}

void BlurModule::set_field(const ZernikeField& f) {
    if (!(f.layout == layout_) || f.num_modes != num_modes_) throw DomainError("blur field layout mismatch");
    params_.value = Eigen::Map<const Eigen::VectorXd>(f.coeffs.data(), static_cast<Eigen::Index>(f.coeffs.size()));
}

PsfField BlurModule::kernels(Cache* cache) const {
    if (!params_.value.allFinite()) throw DomainError("blur coefficients are not finite");
    PsfField psfs = forward::psf_field_from_basis(field(), *basis_, *pupil_, cache ? &cache->basis : nullptr);
    if (cache) cache->psfs = psfs;
    return psfs;
}

Image BlurModule::blur(const Image& image) const { return forward::apply_psf_field(image, kernels()); }

void BlurModule::backward(const Cache& cache, const Eigen::MatrixXd& grad_kernels) {
    const auto g = forward::psf_field_from_basis_backward(field(), *basis_, *pupil_, cache.basis, grad_kernels);
    params_.grad += Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

}  // namespace nert::nets
