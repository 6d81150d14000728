// nert: simulate turbulence stacks, restore them, and evaluate the result.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "nert/config.hpp"
#include "nert/errors.hpp"
#include "nert/forward.hpp"
#include "nert/io.hpp"
#include "nert/metrics.hpp"
#include "nert/rng.hpp"
#include "nert/runtime.hpp"
#include "nert/trainer.hpp"

#ifndef NERT_GIT_DESCRIBE
#define NERT_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace nert;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kDivergence = 4 };

constexpr const char* kVersion = "0.1.0";
constexpr const char* kDistortionFile = "distortions.bin";
constexpr const char* kCheckpointFile = "checkpoint.nert";

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string tool_version() { return std::string(kVersion) + "+" + NERT_GIT_DESCRIBE; }

void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

// Flags shared by restore and anytime. Unset optionals defer to the config
// file, then the preset, then built-in defaults.
struct ConfigFlags {
    std::optional<std::string> preset;
    std::optional<std::string> config_path;
    std::optional<double> d_over_r0, corr, lr;
    std::optional<int> kernel_size, epochs_init, epochs_main, n_frames, gen_width, def_width, pe_bands;
    std::optional<std::uint64_t> seed;
    std::vector<int> image_size;
    std::vector<double> loss_weights;
    std::optional<std::string> basis_cache;

    void attach(CLI::App* app) {
        app->add_option("--preset", preset, "turbulence preset: air or water");
        app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        app->add_option("--d-over-r0", d_over_r0, "turbulence strength D/r0");
        app->add_option("--corr", corr, "spatial correlation parameter in [-5, -0.01]");
        app->add_option("--kernel-size", kernel_size, "odd PSF kernel size");
        app->add_option("--epochs-init", epochs_init, "identity-initialization epochs");
        app->add_option("--epochs-main", epochs_main, "joint optimization epochs");
        app->add_option("--lr", lr, "Adam learning rate");
        app->add_option("--n-frames", n_frames, "frames used per window");
        app->add_option("--image-size", image_size, "rows cols")->expected(2);
        app->add_option("--seed", seed, "random seed");
        app->add_option("--loss-weights", loss_weights, "weights of the three consistency terms")->expected(3);
        app->add_option("--generator-width", gen_width, "hidden width of the image generator");
        app->add_option("--deformer-width", def_width, "channel width of the grid deformers");
        app->add_option("--pe-bands", pe_bands, "positional-encoding bands");
        app->add_option("--basis-cache", basis_cache, "PSF basis cache file, reused when its settings match");
    }

    RestorationConfig resolve() const {
        RestorationConfig c;
        json file = json::object();
        if (config_path) {
            try {
                file = json::parse(io::read_file(*config_path));
            } catch (const json::exception& e) {
                throw ConfigError("cannot parse config " + *config_path + ": " + e.what());
            }
            if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
        }
        std::string name = "air";
        if (file.contains("preset")) name = file.at("preset").get<std::string>();
        if (preset) name = *preset;
        apply_preset(c, name);
        file.erase("preset");
        merge_json(c, file);
        if (d_over_r0) c.d_over_r0 = *d_over_r0;
        if (corr) c.corr = *corr;
        if (kernel_size) c.psf_kernel_size = *kernel_size;
        if (epochs_init) c.epochs_init = *epochs_init;
        if (epochs_main) c.epochs_main = *epochs_main;
        if (lr) c.learning_rate = *lr;
        if (n_frames) c.n_frames = *n_frames;
        if (image_size.size() == 2) {
            c.image_rows = image_size[0];
            c.image_cols = image_size[1];
        }
        if (seed) c.seed = *seed;
        if (loss_weights.size() == 3) std::copy(loss_weights.begin(), loss_weights.end(), c.loss_weights.begin());
        if (gen_width) c.generator_width = *gen_width;
        if (def_width) c.deformer_width = *def_width;
        if (pe_bands) c.pe_bands = *pe_bands;
        c.validate();
        return c;
    }
};

std::shared_ptr<const optics::PsfBasis> basis_for(const RestorationConfig& c, const std::optional<std::string>& cache) {
    if (!cache) return make_basis(c);
    const fs::path path = *cache;
    const std::uint64_t seed = derive_seed(c.seed, Stream::Basis);
    if (!optics::basis_cache_matches(path, c.turbulence(), c.basis_size, c.basis_samples, seed, c.num_modes)) {
        optics::save_psf_basis(*make_basis(c), path);
    }
    // Always go through the stored copy so cached and uncached runs agree.
    return std::make_shared<const optics::PsfBasis>(optics::load_psf_basis(path));
}

struct LoadedFrames {
    std::vector<fs::path> paths;
    FrameStack frames;
    std::string digest;
};

// All frames of `dir` in lexical order; digest covers names and contents.
LoadedFrames load_frames(const fs::path& dir, int rows, int cols) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    LoadedFrames out;
    out.paths = io::list_frames(dir);
    std::string hashes;
    for (const auto& p : out.paths) {
        out.frames.push_back(io::resize(io::read_image(p), rows, cols));
        hashes += p.filename().string() + ":" + io::sha256_file(p) + "\n";
    }
    out.digest = io::sha256_hex(hashes);
    return out;
}

// Seeded choice of `count` frames, kept in lexical order.
std::vector<std::size_t> choose_frames(std::size_t available, int count, std::uint64_t seed) {
    std::vector<std::size_t> idx(available);
    std::iota(idx.begin(), idx.end(), 0);
    if (static_cast<std::size_t>(count) >= available) return idx;
    Rng rng = make_rng(seed, Stream::Sampling);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::optional<Image> load_truth(const fs::path& dir, int rows, int cols) {
    const fs::path p = dir / "ground_truth.png";
    if (!fs::exists(p)) return std::nullopt;
    return io::resize(io::read_image(p), rows, cols);
}

// --------------------------------------------------------------------------
// plotting

struct Series {
    std::string name;
    std::vector<double> values;
    cv::Scalar color;
};

void draw_curves(const fs::path& path, const std::vector<double>& x, const std::vector<Series>& series) {
    const int w = 800, h = 480, left = 70, right = 20, top = 20, bottom = 50;
    cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& s : series) {
        for (double v : s.values) {
            if (v > 0 && std::isfinite(v)) {
                lo = std::min(lo, std::log10(v));
                hi = std::max(hi, std::log10(v));
            }
        }
    }
    if (!(hi > lo)) {
        lo = std::isfinite(lo) ? lo - 1 : -1;
        hi = lo + 2;
    }
    const double x0 = x.empty() ? 0 : x.front(), x1 = x.empty() ? 1 : std::max(x.back(), x0 + 1);
    auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * (w - left - right); };
    auto py = [&](double v) { return top + (hi - std::log10(v)) / (hi - lo) * (h - top - bottom); };
    cv::rectangle(img, {left, top}, {w - right, h - bottom}, cv::Scalar(0, 0, 0));
    for (int d = static_cast<int>(std::ceil(lo)); d <= static_cast<int>(std::floor(hi)); ++d) {
        const int y = static_cast<int>(py(std::pow(10.0, d)));
        cv::line(img, {left, y}, {w - right, y}, cv::Scalar(220, 220, 220));
        cv::putText(img, "1e" + std::to_string(d), {5, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0));
    }
    cv::putText(img, "epoch", {w / 2 - 20, h - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0));
    int legend = top + 15;
    for (const auto& s : series) {
        std::vector<cv::Point> pts;
        for (std::size_t i = 0; i < s.values.size() && i < x.size(); ++i) {
            if (s.values[i] > 0 && std::isfinite(s.values[i])) {
                pts.emplace_back(static_cast<int>(px(x[i])), static_cast<int>(py(s.values[i])));
            }
        }
        if (pts.size() > 1) cv::polylines(img, pts, false, s.color, 1, cv::LINE_AA);
        cv::putText(img, s.name, {w - right - 90, legend}, cv::FONT_HERSHEY_SIMPLEX, 0.45, s.color);
        legend += 18;
    }
    cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
    Image out(h, w, 3);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch) out(r, c, ch) = img.at<cv::Vec3b>(r, c)[ch] / 255.0;
    io::write_png(path, out);
}

// Normalizes a single-channel map to [0,1] for display.
Image normalized(Image map) {
    const double hi = map.max();
    if (hi > 0) {
        for (double& v : map.data) v /= hi;
    }
    return map;
}

// --------------------------------------------------------------------------
// commands

struct SimulateArgs {
    std::string clean, out, preset = "air";
    std::optional<double> d_over_r0, corr;
    std::optional<int> kernel_size;
    int frames = 20;
    std::uint64_t seed = 0;
    std::vector<int> image_size;
};

int cmd_simulate(const SimulateArgs& a) {
    optics::TurbulenceParams p = preset_params(a.preset);
    if (a.d_over_r0) p.d_over_r0 = *a.d_over_r0;
    if (a.corr) p.corr = *a.corr;
    if (a.kernel_size) p.kernel_size = *a.kernel_size;
    try {
        p.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    if (a.frames < 1) throw ConfigError("--frames must be at least 1");
    Image clean = io::read_image(a.clean);
    if (a.image_size.size() == 2) clean = io::resize(clean, a.image_size[0], a.image_size[1]);

    const fs::path out = a.out;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());

    const auto t0 = Clock::now();
    forward::SimulationOptions opts;
    const auto stack = forward::simulate_stack(clean, p, a.frames, a.seed, opts);
    for (int k = 0; k < a.frames; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03d.png", k);
        io::write_png(out / name, stack.frames[k]);
    }
    io::write_png(out / "ground_truth.png", clean);
    forward::save_distortions(stack.truth, out / kDistortionFile);
    write_json(out / "sidecar.json", {{"d_over_r0", p.d_over_r0},
                                      {"corr", p.corr},
                                      {"kernel_size", p.kernel_size},
                                      {"preset", a.preset},
                                      {"frames", a.frames},
                                      {"seed", a.seed},
                                      {"image_size", {clean.rows, clean.cols}},
                                      {"num_modes", opts.num_modes},
                                      {"control_spacing", opts.control_spacing},
                                      {"psf_path", "analytic"},
                                      {"clean", fs::path(a.clean).filename().string()},
                                      {"distortions", kDistortionFile},
                                      {"version", tool_version()}});
    std::cout << "wrote " << a.frames << " frames to " << out.string() << " in " << elapsed(t0) << " s\n";
    return kOk;
}

struct RestoreArgs {
    std::string frames, out;
    ConfigFlags flags;
};

json manifest_base(const RestorationConfig& c, const LoadedFrames& lf, const std::vector<std::size_t>& chosen,
                   const fs::path& dir) {
    json names = json::array();
    for (auto i : chosen) names.push_back(lf.paths[i].filename().string());
    return {{"config", to_json(c)},
            {"frames_dir", fs::absolute(dir).string()},
            {"input_digest", lf.digest},
            {"frames", names},
            {"version", tool_version()}};
}

int cmd_restore(const RestoreArgs& a) {
    const RestorationConfig c = a.flags.resolve();
    const auto lf = load_frames(a.frames, c.image_rows, c.image_cols);
    if (lf.frames.size() < 2) throw DataError("restore needs at least 2 frames in " + a.frames);
    const auto chosen = choose_frames(lf.frames.size(), c.n_frames, c.seed);
    FrameStack frames;
    for (auto i : chosen) frames.push_back(lf.frames[i]);

    const fs::path out = a.out;
    fs::create_directories(out);
    const auto t0 = Clock::now();
    auto basis = basis_for(c, a.flags.basis_cache);
    const double basis_seconds = elapsed(t0);

    RestorationResult r = restore(frames, c, basis);
    io::write_png(out / "restored.png", r.restored);
    io::write_file_atomic(out / "loss_curve.csv", loss_history_csv(r.state.history));
    save_checkpoint(r.state, out / kCheckpointFile);

    json manifest = manifest_base(c, lf, chosen, a.frames);
    manifest["timings"] = {{"basis_seconds", basis_seconds},
                           {"phase1_seconds", r.state.phase1_seconds},
                           {"phase2_seconds", r.state.phase2_seconds},
                           {"total_seconds", elapsed(t0)}};
    manifest["learning_rate_final"] = r.state.learning_rate;
    manifest["checkpoint"] = kCheckpointFile;
    if (const auto truth = load_truth(a.frames, c.image_rows, c.image_cols)) {
        json m = metrics::to_json(metrics::evaluate(r.restored, *truth, frames));
        m["n_frames"] = static_cast<int>(frames.size());
        m["preset"] = c.preset;
        m["seed"] = c.seed;
        write_json(out / "metrics.json", m);
        manifest["metrics"] = m;
        std::cout << "psnr " << m["psnr"] << " dB (temporal mean " << m["baseline_psnr"] << " dB)\n";
    }
    write_json(out / "run_manifest.json", manifest);
    std::cout << "restored image written to " << (out / "restored.png").string() << "\n";
    return kOk;
}

struct AnytimeArgs {
    std::string frames, out, stream_order = "lexical";
    int warm_epochs = -1;
    ConfigFlags flags;
};

int cmd_anytime(const AnytimeArgs& a) {
    if (a.stream_order != "lexical") throw ConfigError("only --stream-order lexical is supported");
    RestorationConfig c = a.flags.resolve();
    const int warm = a.warm_epochs >= 0 ? a.warm_epochs : c.warm_epochs;
    c.warm_epochs = warm;
    const auto lf = load_frames(a.frames, c.image_rows, c.image_cols);
    if (lf.frames.size() < 2) throw DataError("anytime needs at least 2 frames in " + a.frames);
    const int window = std::min<int>(c.n_frames, static_cast<int>(lf.frames.size()));
    const fs::path out = a.out;
    fs::create_directories(out);

    auto basis = basis_for(c, a.flags.basis_cache);
    FrameStack first(lf.frames.begin(), lf.frames.begin() + window);
    const auto t0 = Clock::now();
    RestorationResult r = restore(first, c, basis);
    const double cold_seconds = elapsed(t0);
    const int cold_epochs = c.epochs_init + c.epochs_main;
    const double cold_loss = phase2_loss(r.state).total;
    const auto truth = load_truth(a.frames, c.image_rows, c.image_cols);

    char name[40];
    std::snprintf(name, sizeof name, "restored_%03d.png", window - 1);
    io::write_png(out / name, r.restored);

    std::ostringstream timing;
    timing << "frame,window,warm_epochs,warm_seconds,cold_epochs,cold_seconds,warm_epochs_to_match,ratio,loss,psnr\n";
    auto psnr_of = [&](const Image& img) { return truth ? metrics::psnr(img, *truth) : NAN; };
    timing << window - 1 << ',' << window << ",0,0," << cold_epochs << ',' << cold_seconds << ",,," << cold_loss << ','
           << psnr_of(r.restored) << '\n';

    for (std::size_t k = window; k < lf.frames.size(); ++k) {
        AnytimeOptions opt;
        opt.target_loss = cold_loss;
        const auto t1 = Clock::now();
        const AnytimeResult u = anytime_update(r.state, lf.frames[k], warm, opt);
        const double secs = elapsed(t1);
        std::snprintf(name, sizeof name, "restored_%03zu.png", k);
        io::write_png(out / name, u.restored);
        timing << k << ',' << r.state.num_frames() << ',' << warm << ',' << secs << ',' << cold_epochs << ','
               << cold_seconds << ',';
        if (u.epochs_to_target >= 0) {
            timing << u.epochs_to_target << ',' << cold_epochs / std::max(1.0, double(u.epochs_to_target));
        } else {
            timing << ",";
        }
        timing << ',' << u.final_loss << ',' << psnr_of(u.restored) << '\n';
    }
    io::write_file_atomic(out / "timing.csv", timing.str());
    io::write_file_atomic(out / "loss_curve.csv", loss_history_csv(r.state.history));
    save_checkpoint(r.state, out / kCheckpointFile);

    std::vector<std::size_t> all(lf.frames.size());
    std::iota(all.begin(), all.end(), 0);
    json manifest = manifest_base(c, lf, all, a.frames);
    manifest["timings"] = {{"cold_seconds", cold_seconds}, {"total_seconds", elapsed(t0)}};
    manifest["cold_final_loss"] = cold_loss;
    write_json(out / "run_manifest.json", manifest);
    std::cout << "processed " << lf.frames.size() - window << " streamed frames after a window of " << window << "\n";
    return kOk;
}

int cmd_eval(const std::string& restored_path, const std::string& truth_path) {
    const Image restored = io::read_image(restored_path);
    const Image truth = io::read_image(truth_path);
    if (!restored.same_shape(truth)) throw DataError("restored and truth images differ in size");
    const json j{{"psnr", metrics::psnr(restored, truth)}, {"ssim", metrics::ssim(restored, truth)}};
    std::cout << j.dump(2) << "\n";
    return kOk;
}

std::vector<std::vector<double>> read_csv_numbers(const fs::path& path, std::vector<std::string>* header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    std::string line;
    std::vector<std::vector<double>> rows;
    bool first = true;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            if (header) *header = cells;
            first = false;
            continue;
        }
        std::vector<double> row;
        for (const auto& s : cells) {
            try {
                row.push_back(s.empty() ? NAN : std::stod(s));
            } catch (const std::exception&) {
                throw DataError("malformed number '" + s + "' in " + path.string());
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

int cmd_plot(const std::string& run) {
    const fs::path dir = run;
    if (!fs::is_directory(dir)) throw DataError("not a run directory: " + run);
    bool wrote = false;

    if (fs::exists(dir / "loss_curve.csv")) {
        const auto rows = read_csv_numbers(dir / "loss_curve.csv", nullptr);
        std::vector<double> x;
        std::vector<Series> s{{"term a", {}, cv::Scalar(200, 60, 40)},
                              {"term b", {}, cv::Scalar(40, 140, 40)},
                              {"term c", {}, cv::Scalar(40, 60, 200)},
                              {"total", {}, cv::Scalar(0, 0, 0)}};
        for (const auto& r : rows) {
            if (r.size() < 5) throw DataError("loss_curve.csv rows need 5 columns");
            x.push_back(r[0]);
            for (int i = 0; i < 4; ++i) s[i].values.push_back(r[i + 1]);
        }
        draw_curves(dir / "loss_curve.png", x, s);
        wrote = true;
    }

    // Prefer the tilt/blur discrepancy map when the run carries ground-truth
    // distortions, else fall back to the restoration error.
    fs::path data_dir = dir;
    if (fs::exists(dir / "run_manifest.json")) {
        const auto m = json::parse(io::read_file(dir / "run_manifest.json"));
        if (m.contains("frames_dir")) data_dir = m["frames_dir"].get<std::string>();
    }
    if (fs::exists(data_dir / kDistortionFile) && fs::exists(data_dir / "sidecar.json") &&
        fs::exists(data_dir / "ground_truth.png")) {
        const auto side = json::parse(io::read_file(data_dir / "sidecar.json"));
        const Image clean = io::read_image(data_dir / "ground_truth.png");
        const auto truth = forward::load_distortions(data_dir / kDistortionFile);
        if (truth.empty()) throw DataError("no distortions stored in " + data_dir.string());
        const auto& sample = truth.front();
        if (sample.tilt_grid.rows != clean.rows || sample.tilt_grid.cols != clean.cols) {
            throw DataError("distortions do not match ground_truth.png");
        }
        optics::PupilPsf pupil(side.at("kernel_size").get<int>(), sample.blur_field.num_modes);
        const PsfField psfs = forward::psf_field_analytic(sample.blur_field, pupil);
        io::write_png(dir / "error_map.png", normalized(forward::model_discrepancy(clean, sample.tilt_grid, psfs)));
        wrote = true;
    } else if (fs::exists(dir / "restored.png") && fs::exists(data_dir / "ground_truth.png")) {
        const Image restored = io::read_image(dir / "restored.png");
        const Image truth = io::resize(io::read_image(data_dir / "ground_truth.png"), restored.rows, restored.cols);
        Image err(restored.rows, restored.cols, 1);
        for (int p = 0; p < restored.pixels(); ++p) {
            for (int ch = 0; ch < 3; ++ch) err.data[p] += std::abs(restored.data[3 * p + ch] - truth.data[3 * p + ch]);
        }
        io::write_png(dir / "error_map.png", normalized(err));
        wrote = true;
    }
    if (!wrote) throw DataError("nothing to plot in " + run);
    std::cout << "plots written to " << dir.string() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Unsupervised restoration of turbulence-distorted image stacks"};
    app.set_version_flag("--version", tool_version());
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "render a distorted stack from a clean image");
    s->add_option("--clean", sim.clean, "clean PNG")->required()->check(CLI::ExistingFile);
    s->add_option("--out", sim.out, "output directory")->required();
    s->add_option("--preset", sim.preset, "air or water")->check(CLI::IsMember({"air", "water"}));
    s->add_option("--d-over-r0", sim.d_over_r0, "turbulence strength (1.5 weak, 3.0 medium, 4.5 strong)");
    s->add_option("--corr", sim.corr, "spatial correlation parameter");
    s->add_option("--kernel-size", sim.kernel_size, "odd PSF kernel size");
    s->add_option("--frames", sim.frames, "number of frames")->capture_default_str();
    s->add_option("--seed", sim.seed, "random seed")->capture_default_str();
    s->add_option("--image-size", sim.image_size, "resize the clean image to rows cols first")->expected(2);

    RestoreArgs res;
    auto* r = app.add_subcommand("restore", "two-step restoration of a frame directory");
    r->add_option("--frames", res.frames, "directory of frame PNGs")->required();
    r->add_option("--out", res.out, "output directory")->required();
    res.flags.attach(r);

    AnytimeArgs any;
    auto* t = app.add_subcommand("anytime", "cold start on the first window, then warm updates per frame");
    t->add_option("--frames", any.frames, "directory of frame PNGs")->required();
    t->add_option("--out", any.out, "output directory")->required();
    t->add_option("--stream-order", any.stream_order, "frame order")->capture_default_str();
    t->add_option("--warm-epochs", any.warm_epochs, "epochs per warm update (default 60)");
    any.flags.attach(t);

    std::string restored, truth;
    auto* e = app.add_subcommand("eval", "print PSNR and SSIM of an image against ground truth");
    e->add_option("--restored", restored, "restored PNG")->required()->check(CLI::ExistingFile);
    e->add_option("--truth", truth, "ground-truth PNG")->required()->check(CLI::ExistingFile);

    std::string run_dir;
    auto* p = app.add_subcommand("plot", "loss curve and error map of a run directory");
    p->add_option("--run", run_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*s) return cmd_simulate(sim);
        if (*r) return cmd_restore(res);
        if (*t) return cmd_anytime(any);
        if (*e) return cmd_eval(restored, truth);
        if (*p) return cmd_plot(run_dir);
    } catch (const DivergenceError& err) {
        std::cerr << "error: " << err.what() << "\n" << err.snapshot() << "\n";
        return kDivergence;
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kUsage;
    } catch (const DataError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kData;
    } catch (const DomainError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kData;
    } catch (const fs::filesystem_error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kData;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kFailure;
    }
    return kUsage;
}
