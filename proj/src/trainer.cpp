#include "nert/trainer.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "nert/container.hpp"
#include "nert/errors.hpp"
#include "nert/io.hpp"
#include "nert/rng.hpp"

namespace nert {

namespace {

constexpr const char* kCheckpointMagic = "nert-ckpt-v1";
constexpr double kDivergenceFactor = 10.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// mean |x - y| over all entries; adds scale * sign(x - y) / n to *gx and
// subtracts it from *gy when given.
double l1(const std::vector<double>& x, const std::vector<double>& y, double scale, std::vector<double>* gx,
          std::vector<double>* gy) {
    const double inv_n = 1.0 / static_cast<double>(x.size());
    double sum = 0.0;
    const double s = scale * inv_n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        sum += std::abs(d);
        if (s != 0.0) {
            const double g = d > 0.0 ? s : (d < 0.0 ? -s : 0.0);
            if (gx) (*gx)[i] += g;
            if (gy) (*gy)[i] -= g;
        }
    }
    return sum * inv_n;
}

FrameModel make_module(const RestorationState& state, std::uint64_t id, bool identity) {
    const auto& cfg = state.config;
    FrameModel m{nets::GridDeformer(state.rows(), state.cols(), cfg.deformer_width, cfg.max_displacement,
                                    derive_seed(cfg.seed, Stream::Weights, id + 1)),
                 nets::BlurModule(state.basis, ControlLayout::for_image(state.rows(), state.cols(), cfg.control_spacing),
                                  cfg.num_modes),
                 id};
    if (identity) m.deformer.zero_last_layer();
    const auto field = optics::sample_correlated_field(cfg.turbulence(), state.rows(), state.cols(), cfg.num_modes,
                                                       derive_seed(cfg.seed, Stream::Alpha, id), cfg.control_spacing);
    m.blur.set_field(field.blur);
    return m;
}

void check_frames(const FrameStack& frames, int min_count) {
    require_uniform(frames, min_count);
    if (frames.front().channels != 3) throw DomainError("restoration expects 3-channel frames");
}

std::string snapshot(const RestorationState& s, const LossRecord& rec) {
    nlohmann::json j{{"epoch", rec.epoch},
                     {"phase", rec.phase},
                     {"loss", {rec.a, rec.b, rec.c, rec.total}},
                     {"phase2_reference", s.phase2_reference},
                     {"learning_rate", s.learning_rate},
                     {"lr_halvings", s.lr_halvings}};
    nlohmann::json groups = nlohmann::json::object();
    for (auto* g : const_cast<RestorationState&>(s).parameter_groups()) {
        groups[g->name] = {{"finite", g->value.allFinite()},
                           {"grad_finite", g->grad.allFinite()},
                           {"max_abs", g->value.size() ? g->value.cwiseAbs().maxCoeff() : 0.0}};
    }
    j["groups"] = groups;
    return j.dump(2);
}

LossRecord phase2_pass(RestorationState& s, bool want_grad) {
    const auto& w = s.config.loss_weights;
    const int n = s.num_frames();
    const double inv_n = 1.0 / n;
    auto& gen = *s.generator;

    nets::ImageGenerator::Cache gen_u_cache;
    const Image clean = gen.generate(s.uniform, want_grad ? &gen_u_cache : nullptr);
    Image grad_clean(clean.rows, clean.cols, clean.channels);

    LossRecord rec;
    rec.phase = 2;
    for (int k = 0; k < n; ++k) {
        auto& mod = s.modules[k];
        const Image& frame = s.observed[k];

        nets::GridDeformer::Cache def_cache;
        const CoordGrid tilt = mod.deformer.deform(s.uniform, want_grad ? &def_cache : nullptr);
        nets::BlurModule::Cache blur_cache;
        const PsfField psfs = mod.blur.kernels(&blur_cache);

        nets::ImageGenerator::Cache gen_t_cache;
        const Image gen_tilted = gen.generate(tilt, want_grad ? &gen_t_cache : nullptr);
        const Image resampled = warp::resample(clean, tilt);
        const Image out_a = forward::apply_psf_field(gen_tilted, psfs);
        const Image out_b = forward::apply_psf_field(resampled, psfs);

        Image grad_a(out_a.rows, out_a.cols, out_a.channels);
        Image grad_b(grad_a);
        const double scale = want_grad ? inv_n : 0.0;
        const double la = l1(out_a.data, frame.data, w[0] * scale, &grad_a.data, nullptr);
        const double lb = l1(out_b.data, frame.data, w[1] * scale, &grad_b.data, nullptr);
        const double lc = l1(out_a.data, out_b.data, w[2] * scale, &grad_a.data, &grad_b.data);
        rec.a += la * inv_n;
        rec.b += lb * inv_n;
        rec.c += lc * inv_n;
        if (!want_grad) continue;

        Image grad_tilted, grad_resampled;
        Eigen::MatrixXd grad_kernels;
        forward::apply_psf_field_backward(gen_tilted, psfs, grad_a, &grad_tilted, &grad_kernels);
        forward::apply_psf_field_backward(resampled, psfs, grad_b, &grad_resampled, &grad_kernels);
        mod.blur.backward(blur_cache, grad_kernels);

        CoordGrid grad_tilt(tilt.rows, tilt.cols);
        gen.backward(tilt, gen_t_cache, grad_tilted, &grad_tilt);
        warp::resample_backward(clean, tilt, grad_resampled, &grad_clean, &grad_tilt);
        mod.deformer.backward(def_cache, grad_tilt);
    }
    if (want_grad) gen.backward(s.uniform, gen_u_cache, grad_clean, nullptr);
    rec.total = w[0] * rec.a + w[1] * rec.b + w[2] * rec.c;
    return rec;
}

void zero_grads(RestorationState& s) {
    for (auto* g : s.parameter_groups()) g->zero_grad();
}

LossRecord checked(const RestorationState& s, LossRecord rec) {
    if (!std::isfinite(rec.total)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(rec.epoch), snapshot(s, rec));
    }
    return rec;
}

// Shared by phase 2 and anytime updates. `observe` sees each epoch's loss,
// evaluated before that epoch's step.
void run_joint_epochs(RestorationState& s, int epochs, const std::function<void(int, const LossRecord&)>& observe) {
    s.lr_halvings = 0;
    for (int e = 0; e < epochs; ++e) {
        zero_grads(s);
        LossRecord rec = phase2_gradients(s);
        rec.epoch = s.epoch + 1;
        checked(s, rec);
        if (e == 0) s.phase2_reference = rec.total;
        if (rec.total > kDivergenceFactor * s.phase2_reference) {
            if (s.lr_halvings > 0) {
                throw DivergenceError("loss exceeded " + std::to_string(kDivergenceFactor) +
                                          "x its initial value after the learning rate was halved",
                                      snapshot(s, rec));
            }
            s.learning_rate *= 0.5;
            ++s.lr_halvings;
        }
        if (observe) observe(e, rec);
        s.history.push_back(rec);
        apply_step(s);
        ++s.epoch;
    }
    s.phase = 2;
}

}  // namespace

std::vector<nets::ParameterGroup*> RestorationState::parameter_groups() {
    std::vector<nets::ParameterGroup*> out;
    if (generator) out.push_back(&generator->params());
    for (auto& m : modules) {
        out.push_back(&m.deformer.params());
        out.push_back(&m.blur.params());
    }
    return out;
}

Image RestorationState::restored() const { return clamped(generator->generate(uniform)); }

std::shared_ptr<const optics::PsfBasis> make_basis(const RestorationConfig& c) {
    return std::make_shared<const optics::PsfBasis>(optics::build_psf_basis(
        c.turbulence(), c.basis_samples, c.basis_size, derive_seed(c.seed, Stream::Basis), c.num_modes,
        c.pupil_resolution));
}

RestorationState init_state(const FrameStack& frames, const RestorationConfig& config,
                            std::shared_ptr<const optics::PsfBasis> basis) {
    config.validate();
    check_frames(frames, 2);
    RestorationState s;
    s.config = config;
    s.basis = basis ? std::move(basis) : make_basis(config);
    if (s.basis->kernel_size() != config.psf_kernel_size || s.basis->num_modes != config.num_modes) {
        throw ConfigError("PSF basis does not match the configured kernel size or mode count");
    }
    s.observed = frames;
    s.uniform = warp::uniform_grid(frames.front().rows, frames.front().cols);
    s.generator = std::make_shared<nets::ImageGenerator>(config.pe_bands, config.generator_width,
                                                         derive_seed(config.seed, Stream::Weights, 0));
    s.learning_rate = config.learning_rate;
    for (std::size_t k = 0; k < frames.size(); ++k) s.modules.push_back(make_module(s, s.next_module_id++, true));
    return s;
}

LossRecord phase1_gradients(RestorationState& s) {
    const int n = s.num_frames();
    const double inv_n = 1.0 / n;
    nets::ImageGenerator::Cache cache;
    const Image clean = s.generator->generate(s.uniform, &cache);
    Image grad_clean(clean.rows, clean.cols, clean.channels);
    LossRecord rec;
    rec.phase = 1;
    for (int k = 0; k < n; ++k) {
        rec.a += inv_n * l1(clean.data, s.observed[k].data, inv_n, &grad_clean.data, nullptr);
        nets::GridDeformer::Cache dc;
        const CoordGrid g = s.modules[k].deformer.deform(s.uniform, &dc);
        CoordGrid grad(g.rows, g.cols);
        rec.b += inv_n * l1(g.xy, s.uniform.xy, inv_n, &grad.xy, nullptr);
        s.modules[k].deformer.backward(dc, grad);
    }
    s.generator->backward(s.uniform, cache, grad_clean, nullptr);
    rec.total = rec.a + rec.b;
    return rec;
}

LossRecord phase2_gradients(RestorationState& s) { return phase2_pass(s, true); }

LossRecord phase2_loss(const RestorationState& s) {
    // No gradient is written on this path.
    return phase2_pass(const_cast<RestorationState&>(s), false);
}

void apply_step(RestorationState& s) {
    for (auto* g : s.parameter_groups()) nets::adam_step(*g, s.learning_rate);
}

void run_phase1(RestorationState& s, int epochs) {
    const auto t0 = Clock::now();
    for (int e = 0; e < epochs; ++e) {
        zero_grads(s);
        LossRecord rec = phase1_gradients(s);
        rec.epoch = s.epoch + 1;
        checked(s, rec);
        s.history.push_back(rec);
        apply_step(s);
        ++s.epoch;
    }
    s.phase = 1;
    s.phase1_seconds += seconds_since(t0);
}

RestorationState phase1_init(const FrameStack& frames, const RestorationConfig& config,
                             std::shared_ptr<const optics::PsfBasis> basis) {
    RestorationState s = init_state(frames, config, std::move(basis));
    run_phase1(s, config.epochs_init);
    return s;
}

void run_phase2(RestorationState& s, int epochs) {
    const auto t0 = Clock::now();
    run_joint_epochs(s, epochs, nullptr);
    s.phase2_seconds += seconds_since(t0);
}

Image phase2_optimize(RestorationState& s, const RestorationConfig& config) {
    if (!s.generator || s.modules.empty()) throw DomainError("phase 2 needs an initialized state");
    config.validate();
    s.config.loss_weights = config.loss_weights;
    s.config.epochs_main = config.epochs_main;
    run_phase2(s, config.epochs_main);
    return s.restored();
}

AnytimeResult anytime_update(RestorationState& s, const Image& new_frame, int epochs_warm,
                             const AnytimeOptions& options) {
    if (!s.generator || s.observed.empty()) throw DomainError("anytime update needs an optimized state");
    if (new_frame.rows != s.rows() || new_frame.cols != s.cols() || new_frame.channels != 3) {
        throw DomainError("new frame does not match the stack shape");
    }
    if (epochs_warm < 0) throw DomainError("warm epochs must be >= 0");
    s.observed.push_back(new_frame);
    s.modules.push_back(make_module(s, s.next_module_id++, true));
    if (options.evict) {
        while (s.num_frames() > s.config.n_frames) {
            s.observed.erase(s.observed.begin());
            s.modules.erase(s.modules.begin());
        }
    }

    AnytimeResult out;
    const bool track = std::isfinite(options.target_loss);
    const auto t0 = Clock::now();
    run_joint_epochs(s, epochs_warm, [&](int e, const LossRecord& rec) {
        if (track && out.epochs_to_target < 0 && rec.total <= options.target_loss) out.epochs_to_target = e;
    });
    s.phase2_seconds += seconds_since(t0);
    out.epochs_run = epochs_warm;
    out.final_loss = phase2_loss(s).total;
    if (track && out.epochs_to_target < 0 && out.final_loss <= options.target_loss) out.epochs_to_target = epochs_warm;
    out.restored = s.restored();
    return out;
}

RestorationResult restore(const FrameStack& frames, const RestorationConfig& config,
                          std::shared_ptr<const optics::PsfBasis> basis) {
    config.validate();
    check_frames(frames, 2);
    FrameStack sized;
    sized.reserve(frames.size());
    for (const auto& f : frames) sized.push_back(io::resize(f, config.image_rows, config.image_cols));
    RestorationResult r{{}, phase1_init(sized, config, std::move(basis))};
    r.restored = phase2_optimize(r.state, config);
    return r;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const RestorationState& s, const std::filesystem::path& path) {
    io::ArrayContainer c;
    c.magic = kCheckpointMagic;
    auto put_group = [&](const std::string& name, const nets::ParameterGroup& g) {
        const auto n = static_cast<std::uint64_t>(g.size());
        c.put(name, {n}, {g.value.data(), g.value.data() + g.size()});
        c.put(name + ".adam_m", {n}, {g.m.data(), g.m.data() + g.size()});
        c.put(name + ".adam_v", {n}, {g.v.data(), g.v.data() + g.size()});
    };
    nlohmann::json steps = nlohmann::json::object();
    put_group("generator", s.generator->params());
    steps["generator"] = s.generator->params().step;
    std::vector<std::uint64_t> ids;
    for (int k = 0; k < s.num_frames(); ++k) {
        const auto& m = s.modules[k];
        put_group("deformer_" + std::to_string(k), m.deformer.params());
        put_group("alpha_" + std::to_string(k), m.blur.params());
        steps["deformer_" + std::to_string(k)] = m.deformer.params().step;
        steps["alpha_" + std::to_string(k)] = m.blur.params().step;
        ids.push_back(m.id);
    }
    std::vector<double> hist;
    for (const auto& r : s.history) {
        hist.insert(hist.end(), {static_cast<double>(r.epoch), static_cast<double>(r.phase), r.a, r.b, r.c, r.total});
    }
    c.put("loss_history", {s.history.size(), 6}, std::move(hist));
    c.metadata = {{"config", to_json(s.config)},
                  {"frames", s.num_frames()},
                  {"image_size", {s.rows(), s.cols()}},
                  {"epoch", s.epoch},
                  {"phase", s.phase},
                  {"learning_rate", s.learning_rate},
                  {"lr_halvings", s.lr_halvings},
                  {"phase2_reference", s.phase2_reference},
                  {"next_module_id", s.next_module_id},
                  {"module_ids", ids},
                  {"adam_steps", steps}};
    c.save(path);
}

RestorationState load_checkpoint(const std::filesystem::path& path, const FrameStack& frames,
                                 std::shared_ptr<const optics::PsfBasis> basis) {
    const auto c = io::ArrayContainer::load(path, kCheckpointMagic);
    try {
        const auto& meta = c.metadata;
        const RestorationConfig config = config_from_json(meta.at("config"));
        const int n = meta.at("frames").get<int>();
        if (static_cast<int>(frames.size()) != n) {
            throw DataError("checkpoint holds " + std::to_string(n) + " frames, " + std::to_string(frames.size()) +
                            " given");
        }
        const auto size = meta.at("image_size").get<std::vector<int>>();
        if (frames.front().rows != size.at(0) || frames.front().cols != size.at(1)) {
            throw DataError("checkpoint image size differs from the frames");
        }
        RestorationState s = init_state(frames, config, std::move(basis));
        const auto ids = meta.at("module_ids").get<std::vector<std::uint64_t>>();
        const auto& steps = meta.at("adam_steps");
        auto load_group = [&](const std::string& name, nets::ParameterGroup& g) {
            for (const auto& [suffix, target] : {std::pair<std::string, Eigen::VectorXd*>{"", &g.value},
                                                 {".adam_m", &g.m},
                                                 {".adam_v", &g.v}}) {
                const auto& a = c.at(name + suffix);
                if (static_cast<Eigen::Index>(a.values.size()) != g.size()) {
                    throw DataError("parameter group '" + name + "' has the wrong size");
                }
                *target = Eigen::Map<const Eigen::VectorXd>(a.values.data(), g.size());
            }
            g.step = steps.at(name).get<std::int64_t>();
        };
        load_group("generator", s.generator->params());
        for (int k = 0; k < n; ++k) {
            s.modules[k].id = ids.at(k);
            load_group("deformer_" + std::to_string(k), s.modules[k].deformer.params());
            load_group("alpha_" + std::to_string(k), s.modules[k].blur.params());
        }
        s.epoch = meta.at("epoch").get<int>();
        s.phase = meta.at("phase").get<int>();
        s.learning_rate = meta.at("learning_rate").get<double>();
        s.lr_halvings = meta.at("lr_halvings").get<int>();
        s.phase2_reference = meta.at("phase2_reference").get<double>();
        s.next_module_id = meta.at("next_module_id").get<std::uint64_t>();
        const auto& h = c.at("loss_history");
        for (std::size_t i = 0; i + 5 < h.values.size(); i += 6) {
            s.history.push_back({static_cast<int>(h.values[i]), static_cast<int>(h.values[i + 1]), h.values[i + 2],
                                 h.values[i + 3], h.values[i + 4], h.values[i + 5]});
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint metadata in " + path.string() + ": " + e.what());
    }
}

std::string loss_history_csv(const std::vector<LossRecord>& history) {
    std::ostringstream os;
    os.precision(10);
    os << "epoch,term_a,term_b,term_c,total,phase\n";
    for (const auto& r : history) {
        os << r.epoch << ',' << r.a << ',' << r.b << ',' << r.c << ',' << r.total << ',' << r.phase << '\n';
    }
    return os.str();
}

}  // namespace nert
