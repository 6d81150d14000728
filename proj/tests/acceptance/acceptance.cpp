// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset; the exit status is nonzero if any selected
// criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nert/forward.hpp"
#include "nert/io.hpp"
#include "nert/metrics.hpp"
#include "nert/runtime.hpp"
#include "nert/trainer.hpp"
#include "oracles.hpp"

using namespace nert;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Image clean_image(int size) {
    return io::resize(io::read_image(oracle::data_dir() / "astronaut_64.png"), size, size);
}

ZernikeField random_field(int rows, int cols, int modes, double sigma, std::uint64_t seed, int spacing) {
    ZernikeField f(ControlLayout::for_image(rows, cols, spacing), modes);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sigma);
    for (double& v : f.coeffs) v = g(rng);
    return f;
}

CoordGrid random_tilt_grid(int rows, int cols, double amp, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    TiltField t(rows, cols);
    for (double& v : t.shift) v = u(rng);
    return warp::tilt_field_to_grid(t);
}

// ---------------------------------------------------------------------------

Outcome forward_model() {
    const auto t0 = Clock::now();
    const auto basis = optics::build_psf_basis({3.0, -5.0, 5}, 200, 12, 1, 15, 15);
    double oracle_err = 0.0, zero_err = 0.0;
    for (std::uint64_t s = 0; s < 4; ++s) {
        const Image J = oracle::random_image(8, 8, 3, 100 + s);
        const DistortionSample d{random_tilt_grid(8, 8, 1.5, 200 + s), random_field(8, 8, 15, 0.5, 300 + s, 4), 0};
        const ZernikeField beta = oracle::basis_coordinates(d.blur_field, basis);
        for (auto path : {forward::PsfPath::Analytic, forward::PsfPath::Basis}) {
            auto kernel = [&](int r, int c) {
                return path == forward::PsfPath::Analytic
                           ? oracle::analytic_kernel(d.blur_field, 5, basis.pupil_resolution, r, c)
                           : oracle::basis_kernel(beta, basis, r, c);
            };
            const Image tb = forward::render_tilt_then_blur(J, d, basis, path);
            const Image bt = forward::render_blur_then_tilt(J, d, basis, path);
            const Image want_tb = oracle::shift_varying_convolution(oracle::resample(J, d.tilt_grid), 5, kernel);
            const Image want_bt = oracle::resample(oracle::shift_varying_convolution(J, 5, kernel), d.tilt_grid);
            oracle_err = std::max({oracle_err, oracle::max_abs_diff(tb, want_tb), oracle::max_abs_diff(bt, want_bt)});

            // Constant image: both orders agree everywhere.
            const Image flat(8, 8, 3, 0.3 + 0.1 * s);
            zero_err = std::max(zero_err, oracle::max_abs_diff(forward::render_tilt_then_blur(flat, d, basis, path),
                                                               forward::render_blur_then_tilt(flat, d, basis, path)));
        }
        // Constant tilt under one kernel for every pixel: agreement wherever
        // neither order reaches the clamped border.
        const Image big = oracle::random_image(16, 16, 3, 400 + s);
        ZernikeField f(ControlLayout::for_image(16, 16, 4), 15);
        const auto one = random_field(2, 2, 15, 0.5, 500 + s, 4);
        for (int i = 0; i < f.layout.points(); ++i) std::copy(one.at(0).begin(), one.at(0).end(), f.at(i).begin());
        const double tx = 0.4 + 0.1 * s, ty = -0.3;
        const DistortionSample c{warp::tilt_field_to_grid(TiltField(16, 16, tx, ty)), f, 0};
        const Image a = forward::render_tilt_then_blur(big, c, basis), b = forward::render_blur_then_tilt(big, c, basis);
        const int margin = 2 + 1 + 1;
        for (int r = margin; r < 16 - margin; ++r)
            for (int col = margin; col < 16 - margin; ++col)
                for (int ch = 0; ch < 3; ++ch) zero_err = std::max(zero_err, std::abs(a(r, col, ch) - b(r, col, ch)));
    }
    const double secs = seconds_since(t0);
    return {oracle_err < 1e-5 && zero_err < 1e-6 && secs < 10.0,
            "oracle max err " + fmt("%.2e", oracle_err) + ", zero-case max diff " + fmt("%.2e", zero_err) + ", " +
                fmt("%.1f", secs) + " s"};
}

Outcome discrepancy_map() {
    const auto t0 = Clock::now();
    const Image J = io::read_image(oracle::data_dir() / "astronaut_128.png");
    const optics::TurbulenceParams p{3.0, -5.0, 11};
    const auto field = optics::sample_correlated_field(p, J.rows, J.cols, optics::kDefaultModes, 7);
    optics::PupilPsf pupil(p.kernel_size, optics::kDefaultModes);
    const PsfField psfs = forward::psf_field_analytic(field.blur, pupil);
    const Image map = forward::model_discrepancy(J, warp::tilt_field_to_grid(field.tilt), psfs);
    const Image grad = oracle::gradient_magnitude(J);

    const double r = oracle::pearson(map.data, grad.data);
    std::vector<double> sorted = grad.data;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const double cut = sorted[sorted.size() / 5 - 1];
    double top = 0.0, total = 0.0;
    for (std::size_t i = 0; i < map.data.size(); ++i) {
        total += map.data[i];
        if (grad.data[i] >= cut) top += map.data[i];
    }
    const double mass = top / total;
    const double secs = seconds_since(t0);
    return {r > 0.5 && mass > 0.9 && secs < 30.0, "pearson " + fmt("%.3f", r) + " (need > 0.5), top-20% mass " +
                                                       fmt("%.3f", mass) + " (need > 0.9), " + fmt("%.1f", secs) + " s"};
}

Outcome gradient_integrity() {
    const auto t0 = Clock::now();
    RestorationConfig c;
    c.d_over_r0 = 2.0;
    c.psf_kernel_size = 5;
    c.num_modes = 8;
    c.basis_size = 8;
    c.basis_samples = 100;
    c.image_rows = c.image_cols = 8;
    c.n_frames = 2;
    c.generator_width = 12;
    c.deformer_width = 4;
    c.control_spacing = 4;
    c.learning_rate = 1e-2;
    c.max_displacement = 0.2;
    c.seed = 5;
    const FrameStack frames{oracle::random_image(8, 8, 3, 1), oracle::random_image(8, 8, 3, 2)};
    auto s = init_state(frames, c);
    run_phase1(s, 5);
    // Deformers start at the identity with a zero last layer; a few joint
    // steps make every layer's gradient nonzero.
    run_phase2(s, 3);
    for (auto* g : s.parameter_groups()) g->zero_grad();
    phase2_gradients(s);

    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    const double h = 1e-7;
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        std::vector<Eigen::VectorXd> dir, saved;
        double norm2 = 0.0, analytic = 0.0;
        for (auto* g : s.parameter_groups()) {
            Eigen::VectorXd v(g->size());
            for (auto& x : v) x = n(rng);
            norm2 += v.squaredNorm();
            dir.push_back(v);
            saved.push_back(g->value);
        }
        const double scale = 1.0 / std::sqrt(norm2);
        auto groups = s.parameter_groups();
        for (std::size_t i = 0; i < groups.size(); ++i) analytic += scale * groups[i]->grad.dot(dir[i]);
        auto loss_at = [&](double step) {
            for (std::size_t i = 0; i < groups.size(); ++i) groups[i]->value = saved[i] + step * scale * dir[i];
            return phase2_loss(s).total;
        };
        const double numeric = (loss_at(h) - loss_at(-h)) / (2 * h);
        loss_at(0.0);
        worst = std::max(worst, oracle::relative_error(analytic, numeric));
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-3 && secs < 120.0,
            "worst relative error " + fmt("%.2e", worst) + " over 20 directions, " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// Restoration fixtures.

struct Fixture {
    int size;
    int epochs_init;
    int epochs_main;
    double lr;
    int generator_width;
    int deformer_width;
    double d_over_r0;
    double max_displacement;  // normalized; about 1.6 px in both fixtures
};

// End-to-end fixture for 64x64 stacks.
constexpr Fixture kRestoreFixture{64, 400, 600, 2e-3, 128, 16, 0.0, 0.05};
// Smaller fixture for the frame-count and loss-term ablations.
constexpr Fixture kAblationFixture{32, 400, 600, 2e-3, 64, 8, 1.5, 0.1};

RestorationConfig fixture_config(const Fixture& f, double d, int n_frames, std::uint64_t seed) {
    RestorationConfig c;
    c.d_over_r0 = d;
    c.image_rows = c.image_cols = f.size;
    c.epochs_init = f.epochs_init;
    c.epochs_main = f.epochs_main;
    c.learning_rate = f.lr;
    c.generator_width = f.generator_width;
    c.deformer_width = f.deformer_width;
    c.max_displacement = f.max_displacement;
    c.n_frames = n_frames;
    c.seed = seed;
    return c;
}

FrameStack simulate(const Image& clean, const RestorationConfig& c, int n, std::uint64_t seed) {
    return forward::simulate_stack(clean, c.turbulence(), n, seed).frames;
}

// Mean total loss over the `w` epochs ending at `end` (1-based, inclusive).
double smoothed_loss(const std::vector<LossRecord>& h, std::size_t end, std::size_t w) {
    const std::size_t lo = end >= w ? end - w : 0;
    double s = 0.0;
    for (std::size_t i = lo; i < end; ++i) s += h[i].total;
    return s / static_cast<double>(end - lo);
}

Outcome restoration_gain() {
    const auto t0 = Clock::now();
    const Image clean = clean_image(kRestoreFixture.size);
    bool ok = true, curves_ok = true;
    std::ostringstream detail;
    for (double d : {1.5, 3.0}) {
        for (std::uint64_t seed : {1, 2, 3}) {
            const auto c = fixture_config(kRestoreFixture, d, 10, seed);
            const FrameStack frames = simulate(clean, c, 10, 1000 + seed);
            const auto r = restore(frames, c);
            const auto rep = metrics::evaluate(r.restored, clean, frames);
            const double gm = rep.psnr - rep.baseline_psnr, gb = rep.psnr - rep.best_frame_psnr;
            ok = ok && gm >= 2.0 && gb >= 1.0;
            const auto& h = r.state.history;
            curves_ok = curves_ok && smoothed_loss(h, h.size(), 50) <= smoothed_loss(h, 100, 50);
            detail << "\n    d=" << d << " seed=" << seed << ": " << fmt("%.2f", rep.psnr) << " dB, +"
                   << fmt("%.2f", gm) << " over mean, +" << fmt("%.2f", gb) << " over best frame";
        }
    }
    const double secs = seconds_since(t0);
    detail << "\n    smoothed final loss <= epoch-100 loss in every run: " << (curves_ok ? "yes" : "no") << ", "
           << fmt("%.0f", secs) << " s";
    return {ok && secs < 3 * 3600.0, "6 runs (need +2 dB over mean, +1 dB over best frame)" + detail.str()};
}

double ablation_psnr(int n_frames, std::array<double, 3> weights, std::uint64_t seed) {
    const Image clean = clean_image(kAblationFixture.size);
    auto c = fixture_config(kAblationFixture, kAblationFixture.d_over_r0, n_frames, seed);
    c.loss_weights = weights;
    const FrameStack frames = simulate(clean, c, n_frames, 2000 + seed);
    return metrics::psnr(restore(frames, c).restored, clean);
}

Outcome frame_count_trend() {
    const auto t0 = Clock::now();
    std::vector<double> mean;
    std::ostringstream detail;
    for (int n : {2, 5, 15, 20}) {
        double s = 0.0;
        for (std::uint64_t seed : {1, 2, 3}) s += ablation_psnr(n, {1, 1, 1}, seed) / 3.0;
        mean.push_back(s);
        detail << " N=" << n << ": " << fmt("%.2f", s) << ";";
    }
    const double g25 = mean[1] - mean[0], g1520 = mean[3] - mean[2];
    const bool ok = mean[3] >= mean[1] && mean[1] >= mean[0] && g1520 < g25;
    return {ok, "mean PSNR" + detail.str() + " gain 2->5 " + fmt("%.2f", g25) + ", 15->20 " + fmt("%.2f", g1520) + ", " +
                    fmt("%.0f", seconds_since(t0)) + " s"};
}

Outcome loss_term_ablation() {
    const auto t0 = Clock::now();
    const std::array<std::array<double, 3>, 4> variants{{{1, 1, 1}, {0, 1, 1}, {1, 0, 1}, {1, 1, 0}}};
    const char* names[] = {"full", "no (a)", "no (b)", "no (c)"};
    std::vector<double> mean;
    std::ostringstream detail;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        double s = 0.0;
        for (std::uint64_t seed : {1, 2, 3}) s += ablation_psnr(5, variants[v], seed) / 3.0;
        mean.push_back(s);
        detail << " " << names[v] << " " << fmt("%.2f", s) << ";";
    }
    const bool ok = mean[0] > mean[1] && mean[0] > mean[2] && mean[0] > mean[3];
    return {ok, "mean PSNR" + detail.str() + " " + fmt("%.0f", seconds_since(t0)) + " s"};
}

Outcome anytime_speedup() {
    const auto t0 = Clock::now();
    const Image clean = clean_image(kAblationFixture.size);
    const int n = 5;
    auto c = fixture_config(kAblationFixture, kAblationFixture.d_over_r0, n, 4);
    const FrameStack frames = simulate(clean, c, n + 1, 3000);
    const int budget = c.epochs_init + c.epochs_main;

    // Cold restart on the window the warm update ends with.
    const FrameStack window(frames.begin() + 1, frames.end());
    const auto cold = restore(window, c);
    const double cold_loss = phase2_loss(cold.state).total;
    const double cold_psnr = metrics::psnr(cold.restored, clean);

    auto warm_state = restore(FrameStack(frames.begin(), frames.begin() + n), c).state;
    AnytimeOptions opts;
    opts.target_loss = cold_loss;
    const auto warm = anytime_update(warm_state, frames[n], budget / 10, opts);
    const double warm_psnr = metrics::psnr(warm.restored, clean);

    const bool reached = warm.epochs_to_target >= 0 && warm.epochs_to_target <= budget / 10;
    const bool close = std::abs(warm_psnr - cold_psnr) <= 0.5;
    std::ostringstream detail;
    detail << "cold " << budget << " epochs to loss " << fmt("%.5f", cold_loss) << " (" << fmt("%.2f", cold_psnr)
           << " dB); warm reached it after "
           << (warm.epochs_to_target >= 0 ? std::to_string(warm.epochs_to_target) : std::string("no"))
           << " epochs (limit " << budget / 10 << "), " << fmt("%.2f", warm_psnr) << " dB, "
           << fmt("%.0f", seconds_since(t0)) << " s";
    return {reached && close, detail.str()};
}

// ---------------------------------------------------------------------------

Outcome optics_suite() {
    const auto t0 = Clock::now();
    // Zernike orthonormality: Gram matrix of modes 1..15 over a fine disk grid.
    const int grid = 512, J = 15;
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(J, J);
    const double cell = (2.0 / grid) * (2.0 / grid);
    for (int r = 0; r < grid; ++r)
        for (int c = 0; c < grid; ++c) {
            const double x = -1.0 + (c + 0.5) * 2.0 / grid, y = -1.0 + (r + 0.5) * 2.0 / grid;
            const double rho = std::hypot(x, y);
            if (rho > 1.0) continue;
            Eigen::VectorXd z(J);
            for (int j = 0; j < J; ++j) z[j] = optics::zernike(j + 1, rho, std::atan2(y, x));
            gram += cell * z * z.transpose();
        }
    const double ortho = (gram / std::numbers::pi - Eigen::MatrixXd::Identity(J, J)).cwiseAbs().maxCoeff();

    // PSF normalization across random fields on both paths.
    const optics::TurbulenceParams p{5.0, -5.0, 11};
    const auto basis = optics::build_psf_basis(p, optics::kDefaultBasisSamples, optics::kDefaultBasisSize, 11);
    double norm_err = 0.0, min_val = 0.0;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto f = optics::sample_correlated_field(p, 24, 24, optics::kDefaultModes, 20 + s, 8);
        for (auto path : {forward::PsfPath::Analytic, forward::PsfPath::Basis}) {
            const PsfField k = forward::make_psf_field(f.blur, basis, path);
            min_val = std::min(min_val, k.kernels.minCoeff());
            norm_err = std::max(norm_err, (k.kernels.colwise().sum().array() - 1.0).abs().maxCoeff());
        }
    }
    const double captured = basis.variance_captured();

    // Determinism of every seeded sampler.
    const auto b2 = optics::build_psf_basis(p, optics::kDefaultBasisSamples, optics::kDefaultBasisSize, 11);
    const auto f1 = optics::sample_correlated_field(p, 33, 33, optics::kDefaultModes, 5);
    const auto f2 = optics::sample_correlated_field(p, 33, 33, optics::kDefaultModes, 5);
    const Image J0 = clean_image(32);
    const auto s1 = forward::simulate_stack(J0, p, 2, 6), s2 = forward::simulate_stack(J0, p, 2, 6);
    const bool determinism = b2.components == basis.components && b2.mean == basis.mean &&
                             f1.blur.coeffs == f2.blur.coeffs && f1.tilt.shift == f2.tilt.shift &&
                             s1.frames[1].data == s2.frames[1].data;

    const double secs = seconds_since(t0);
    const bool ok = ortho < 1e-2 && norm_err < 1e-6 && min_val >= 0.0 && captured >= 0.95 && determinism && secs < 60.0;
    return {ok, "Zernike Gram err " + fmt("%.1e", ortho) + ", PSF sum err " + fmt("%.1e", norm_err) +
                    ", basis variance " + fmt("%.4f", captured) + ", deterministic " + (determinism ? "yes" : "no") +
                    ", " + fmt("%.1f", secs) + " s"};
}

Outcome metrics_equivalence() {
    double psnr_err = 0.0, ssim_err = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Image a = oracle::random_image(16, 16, 3, 40 + s), b = oracle::random_image(16, 16, 3, 50 + s);
        Image c = a;
        const Image noise = oracle::random_image(16, 16, 3, 60 + s, -0.05, 0.05);
        for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += noise.data[i];
        for (const Image* other : std::array<const Image*, 2>{&b, &c}) {
            psnr_err = std::max(psnr_err, std::abs(metrics::psnr(a, *other) - oracle::psnr(a, *other)));
            ssim_err = std::max(ssim_err, std::abs(metrics::ssim(a, *other) - oracle::ssim(a, *other)));
        }
    }
    const Image a = oracle::random_image(16, 16, 3, 70);
    Image shifted = a;
    for (double& v : shifted.data) v += 0.1;
    const double p20 = metrics::psnr(a, shifted);
    const bool ok = psnr_err < 1e-6 && ssim_err < 1e-6 && std::abs(p20 - 20.0) < 1e-9;
    return {ok, "psnr err " + fmt("%.1e", psnr_err) + ", ssim err " + fmt("%.1e", ssim_err) + ", psnr(a, a+0.1) = " +
                    fmt("%.12f", p20)};
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"forward model matches oracles", forward_model},
        {"discrepancy map follows edges", discrepancy_map},
        {"pipeline gradients match finite differences", gradient_integrity},
        {"end-to-end restoration gain", restoration_gain},
        {"more frames help with diminishing returns", frame_count_trend},
        {"every loss term contributes", loss_term_ablation},
        {"anytime warm start speedup", anytime_speedup},
        {"optics invariants", optics_suite},
        {"metrics match scalar oracles", metrics_equivalence},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
                  << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
