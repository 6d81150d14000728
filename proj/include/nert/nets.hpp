#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nert/field.hpp"
#include "nert/forward.hpp"
#include "nert/image.hpp"
#include "nert/psf_basis.hpp"
#include "nert/warp.hpp"

namespace nert::nets {

/// Flat parameter vector with its gradient and Adam moments.
struct ParameterGroup {
    std::string name;
    Eigen::VectorXd value;
    Eigen::VectorXd grad;
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::int64_t step = 0;

    ParameterGroup() = default;
    ParameterGroup(std::string name, Eigen::Index size);

    Eigen::Index size() const { return value.size(); }
    void zero_grad() { grad.setZero(); }
    bool finite() const { return value.allFinite(); }
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam step on `group` using its accumulated gradient.
void adam_step(ParameterGroup& group, double lr, const AdamOptions& options = {});

/// [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]
/// per column of `coords` (2 x P). Returns (4L+2) x P.
Eigen::MatrixXd positional_encoding(const Eigen::Ref<const Eigen::MatrixXd>& coords, int bands);
int encoding_dim(int bands);

/// Layer shape of a fully connected stack.
struct LinearShape {
    int in = 0;
    int out = 0;
    Eigen::Index offset = 0;  ///< start of W (out x in, column-major) in the group; b follows
};

/// ReLU MLP over columns with a linear final layer. Parameters live in one group.
class Mlp {
public:
    struct Cache {
        std::vector<Eigen::MatrixXd> inputs;  // input to each layer (post-activation)
    };

    Mlp() = default;
    Mlp(std::vector<int> widths, std::string name);

    Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x, Cache* cache = nullptr) const;
    /// Accumulates parameter gradients; returns d/dx when `want_input_grad`.
    Eigen::MatrixXd backward(const Cache& cache, Eigen::MatrixXd grad_out, bool want_input_grad);

    const std::vector<LinearShape>& layers() const { return layers_; }
    ParameterGroup& params() { return params_; }
    const ParameterGroup& params() const { return params_; }

    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    void init_uniform(std::uint64_t seed);

private:
    std::vector<LinearShape> layers_;
    ParameterGroup params_;
};

/// Shared coordinate network: positional encoding, 4 ReLU layers of
/// `width`, linear head to 3 channels, sigmoid.
class ImageGenerator {
public:
    struct Cache {
        Eigen::MatrixXd encoded;
        Mlp::Cache mlp;
        Eigen::MatrixXd output;  // 3 x P after sigmoid
    };

    ImageGenerator(int bands, int width, std::uint64_t seed);

    Image generate(const CoordGrid& grid, Cache* cache = nullptr) const;
    /// Accumulates parameter gradients from d/d image; optionally writes d/d grid.
    void backward(const CoordGrid& grid, const Cache& cache, const Image& grad_image, CoordGrid* grad_grid);

    int bands() const { return bands_; }
    int width() const { return width_; }
    const Mlp& mlp() const { return mlp_; }
    ParameterGroup& params() { return mlp_.params(); }
    const ParameterGroup& params() const { return mlp_.params(); }

private:
    int bands_;
    int width_;
    Mlp mlp_;
};

/// Same-padded 3x3 convolution stack on a 2-channel coordinate map with ReLU
/// between layers. Output is G_U + max_displacement * tanh(z).
class GridDeformer {
public:
    struct Cache {
        std::vector<Eigen::MatrixXd> inputs;  // C x P per layer
        Eigen::MatrixXd tanh_out;             // 2 x P
    };

    GridDeformer(int rows, int cols, int width, double max_displacement, std::uint64_t seed);

    CoordGrid deform(const CoordGrid& uniform, Cache* cache = nullptr) const;
    /// Accumulates parameter gradients from d/d deformed grid.
    void backward(const Cache& cache, const CoordGrid& grad_grid);

    /// Zeroes the final layer so the deformer starts as the exact identity.
    void zero_last_layer();

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int width() const { return width_; }
    double max_displacement() const { return max_disp_; }
    int num_layers() const { return static_cast<int>(layers_.size()); }
    ParameterGroup& params() { return params_; }
    const ParameterGroup& params() const { return params_; }

private:
    struct Conv {
        int in = 0;
        int out = 0;
        Eigen::Index offset = 0;  // 9 taps of (out x in), then bias
    };

    Eigen::MatrixXd conv(const Conv& layer, const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd conv_backward(const Conv& layer, const Eigen::MatrixXd& x, const Eigen::MatrixXd& grad_out,
                                  bool want_input_grad);
    Eigen::MatrixXd shifted(const Eigen::MatrixXd& x, int dr, int dc) const;

    int rows_;
    int cols_;
    int width_;
    double max_disp_;
    std::vector<Conv> layers_;
    ParameterGroup params_;
};

/// Learnable per-frame Zernike field applied through the shared PSF basis.
class BlurModule {
public:
    struct Cache {
        PsfField psfs;
        forward::BasisPsfCache basis;
    };

    BlurModule(std::shared_ptr<const optics::PsfBasis> basis, const ControlLayout& layout, int num_modes);

    /// Kernels for the current coefficients; reuse across calls within a step.
    PsfField kernels(Cache* cache = nullptr) const;
    Image blur(const Image& image) const;
    /// d/d coefficients accumulated from d/d kernels.
    void backward(const Cache& cache, const Eigen::MatrixXd& grad_kernels);

    ZernikeField field() const;
    void set_field(const ZernikeField& field);

    const ControlLayout& layout() const { return layout_; }
    int num_modes() const { return num_modes_; }
    const optics::PsfBasis& basis() const { return *basis_; }
    ParameterGroup& params() { return params_; }
    const ParameterGroup& params() const { return params_; }

private:
    std::shared_ptr<const optics::PsfBasis> basis_;
    std::unique_ptr<optics::PupilPsf> pupil_;
    ControlLayout layout_;
    int num_modes_;
    ParameterGroup params_;
};

}  // namespace nert::nets
