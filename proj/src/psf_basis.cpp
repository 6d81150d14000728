#include "nert/psf_basis.hpp"

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "nert/container.hpp"
#include "nert/errors.hpp"
#include "nert/field.hpp"
#include "nert/io.hpp"
#include "nert/rng.hpp"

namespace nert::optics {

namespace {

constexpr const char* kBasisMagic = "nert-psf-basis-v1";

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    auto p = path;
    p += ".json";
    return p;
}

nlohmann::json describe(const PsfBasis& b) {
    return {{"d_over_r0", b.params.d_over_r0},
            {"corr", b.params.corr},
            {"kernel_size", b.params.kernel_size},
            {"basis_size", b.size()},
            {"requested_basis_size", b.requested_size},
            {"n_samples", b.n_samples},
            {"seed", b.seed},
            {"num_modes", b.num_modes},
            {"pupil_resolution", b.pupil_resolution},
            {"warnings", b.warnings}};
}

}  // namespace

Eigen::VectorXd PsfBasis::project(const Eigen::Ref<const Eigen::VectorXd>& psf) const {
    return components.transpose() * (psf - mean);
}

Eigen::VectorXd PsfBasis::reconstruct(const Eigen::Ref<const Eigen::VectorXd>& beta) const {
    return mean + components * beta;
}

double PsfBasis::variance_captured() const {
    const double total = singular_values.squaredNorm();
    if (total <= 0.0) return 1.0;
    return singular_values.head(size()).squaredNorm() / total;
}

Eigen::MatrixXd sample_psfs(const TurbulenceParams& params, int n_samples, std::uint64_t seed, int num_modes,
                            int pupil_resolution) {
    params.validate();
    PupilPsf pupil(params.kernel_size, num_modes, pupil_resolution);
    const auto variances = blur_mode_variances(params.d_over_r0, num_modes);
    Rng rng = make_rng(seed, Stream::Basis);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int d = params.kernel_size * params.kernel_size;
    Eigen::MatrixXd samples(d, n_samples);
    std::vector<double> coeffs(static_cast<std::size_t>(num_modes));
    for (int s = 0; s < n_samples; ++s) {
        for (int k = 0; k < num_modes; ++k) coeffs[k] = std::sqrt(variances[k]) * normal(rng);
        const auto psf = pupil.psf(coeffs);
        samples.col(s) = Eigen::Map<const Eigen::VectorXd>(psf.data(), d);
    }
    return samples;
}

PsfBasis build_psf_basis(const TurbulenceParams& params, int n_samples, int basis_size, std::uint64_t seed,
                         int num_modes, int pupil_resolution) {
    if (basis_size < 1 || n_samples < basis_size) throw DomainError("need n_samples >= basis_size >= 1");
    PsfBasis b;
    b.params = params;
    b.num_modes = num_modes;
    b.pupil_resolution = pupil_resolution > 0 ? pupil_resolution : 4 * params.kernel_size;
    b.n_samples = n_samples;
    b.requested_size = basis_size;
    b.seed = seed;

    const Eigen::MatrixXd samples = sample_psfs(params, n_samples, seed, num_modes, b.pupil_resolution);
    b.mean = samples.rowwise().mean();
    const Eigen::MatrixXd centred = samples.colwise() - b.mean;

    Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinU);
    b.singular_values = svd.singularValues();
    const double top = b.singular_values.size() > 0 ? b.singular_values[0] : 0.0;
    const double tol = std::max(1e-12, top * 1e-10);
    int rank = 0;
    while (rank < b.singular_values.size() && b.singular_values[rank] > tol) ++rank;

    int keep = basis_size;
    if (rank < basis_size) {
        b.warnings.push_back("sample matrix rank " + std::to_string(rank) + " is below requested basis size " +
                             std::to_string(basis_size) + "; basis reduced");
        keep = rank;
    }
    b.components = svd.matrixU().leftCols(keep);
    return b;
}

void save_psf_basis(const PsfBasis& basis, const std::filesystem::path& path) {
    io::ArrayContainer c;
    c.magic = kBasisMagic;
    c.metadata = describe(basis);
    const auto d = static_cast<std::uint64_t>(basis.mean.size());
    auto flat = [](const auto& m) { return std::vector<double>(m.data(), m.data() + m.size()); };
    c.put("mean", {d}, flat(basis.mean), io::DType::Float32);
    // Row-major (K', d): one contiguous row per component, the column-major
    // layout of the d x K' matrix.
    c.put("components", {static_cast<std::uint64_t>(basis.size()), d}, flat(basis.components), io::DType::Float32);
    c.put("singular_values", {static_cast<std::uint64_t>(basis.singular_values.size())},
          flat(basis.singular_values), io::DType::Float32);
    c.save(path);

    nlohmann::json side = describe(basis);
    side["sha256"] = io::sha256_file(path);
    side["format"] = kBasisMagic;
    io::write_file_atomic(sidecar_path(path), side.dump(2));
}

PsfBasis load_psf_basis(const std::filesystem::path& path) {
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(io::read_file(sidecar_path(path)));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("unreadable basis sidecar: " + std::string(e.what()));
    }
    if (side.value("sha256", std::string()) != io::sha256_file(path)) {
        throw DataError("PSF basis hash does not match its sidecar: " + path.string());
    }
    const auto c = io::ArrayContainer::load(path, kBasisMagic);
    PsfBasis b;
    const auto& m = c.metadata;
    b.params = {m.at("d_over_r0").get<double>(), m.at("corr").get<double>(), m.at("kernel_size").get<int>()};
    b.num_modes = m.at("num_modes").get<int>();
    b.pupil_resolution = m.at("pupil_resolution").get<int>();
    b.n_samples = m.at("n_samples").get<int>();
    b.requested_size = m.at("requested_basis_size").get<int>();
    b.seed = m.at("seed").get<std::uint64_t>();
    b.warnings = m.at("warnings").get<std::vector<std::string>>();

    const auto& mean = c.at("mean");
    const auto& comps = c.at("components");
    const auto& sv = c.at("singular_values");
    const auto d = static_cast<Eigen::Index>(mean.values.size());
    if (comps.shape.size() != 2 || static_cast<Eigen::Index>(comps.shape[1]) != d) {
        throw DataError("PSF basis components have the wrong shape");
    }
    b.mean = Eigen::Map<const Eigen::VectorXd>(mean.values.data(), d);
    b.components = Eigen::Map<const Eigen::MatrixXd>(comps.values.data(), d, static_cast<Eigen::Index>(comps.shape[0]));
    b.singular_values = Eigen::Map<const Eigen::VectorXd>(sv.values.data(), static_cast<Eigen::Index>(sv.values.size()));
    // float32 storage: restore the exact unit sum of the mean kernel
    b.mean /= b.mean.sum();
    return b;
}

bool basis_cache_matches(const std::filesystem::path& path, const TurbulenceParams& params, int basis_size,
                         int n_samples, std::uint64_t seed, int num_modes) {
    if (!std::filesystem::exists(path) || !std::filesystem::exists(sidecar_path(path))) return false;
    try {
        const auto side = nlohmann::json::parse(io::read_file(sidecar_path(path)));
        if (side.value("sha256", std::string()) != io::sha256_file(path)) return false;
        return side.at("d_over_r0").get<double>() == params.d_over_r0 && side.at("corr").get<double>() == params.corr &&
               side.at("kernel_size").get<int>() == params.kernel_size &&
               side.at("requested_basis_size").get<int>() == basis_size && side.at("n_samples").get<int>() == n_samples &&
               side.at("seed").get<std::uint64_t>() == seed && side.at("num_modes").get<int>() == num_modes;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace nert::optics
