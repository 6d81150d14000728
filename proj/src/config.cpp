#include "nert/config.hpp"

#include "nert/errors.hpp"

namespace nert {

void RestorationConfig::validate() const {
    try {
        turbulence().validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    if (epochs_init < 0 || epochs_main < 0 || warm_epochs < 0) throw ConfigError("epoch counts must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (n_frames < 2) throw ConfigError("n_frames must be at least 2");
    if (image_rows < psf_kernel_size || image_cols < psf_kernel_size) {
        throw ConfigError("image_size must be at least the PSF kernel size");
    }
    for (double w : loss_weights) {
        if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
    }
    if (!(max_displacement > 0.0)) throw ConfigError("max_displacement must be positive");
    if (pe_bands < 0) throw ConfigError("pe_bands must be >= 0");
    if (generator_width < 1 || deformer_width < 1) throw ConfigError("network widths must be positive");
    if (num_modes < 1 || basis_size < 1 || basis_samples < 2) throw ConfigError("basis settings out of range");
    if (control_spacing < 1) throw ConfigError("control_spacing must be positive");
    if (pupil_resolution != 0 && pupil_resolution < psf_kernel_size) {
        throw ConfigError("pupil_resolution must be 0 or at least the kernel size");
    }
}

optics::TurbulenceParams preset_params(const std::string& name) {
    if (name == "air") return {5.0, -5.0, 11};
    if (name == "water") return {0.1, -5.0, 5};
    throw ConfigError("unknown preset '" + name + "' (expected air or water)");
}

void apply_preset(RestorationConfig& c, const std::string& name) {
    const auto p = preset_params(name);
    c.preset = name;
    c.d_over_r0 = p.d_over_r0;
    c.corr = p.corr;
    c.psf_kernel_size = p.kernel_size;
}

nlohmann::json to_json(const RestorationConfig& c) {
    return {
        {"preset", c.preset},
        {"d_over_r0", c.d_over_r0},
        {"corr", c.corr},
        {"psf_kernel_size", c.psf_kernel_size},
        {"epochs_init", c.epochs_init},
        {"epochs_main", c.epochs_main},
        {"warm_epochs", c.warm_epochs},
        {"learning_rate", c.learning_rate},
        {"n_frames", c.n_frames},
        {"image_size", {c.image_rows, c.image_cols}},
        {"seed", c.seed},
        {"loss_weights", c.loss_weights},
        {"max_displacement", c.max_displacement},
        {"pe_bands", c.pe_bands},
        {"generator_width", c.generator_width},
        {"deformer_width", c.deformer_width},
        {"num_modes", c.num_modes},
        {"basis_size", c.basis_size},
        {"basis_samples", c.basis_samples},
        {"control_spacing", c.control_spacing},
        {"pupil_resolution", c.pupil_resolution},
    };
}

void merge_json(RestorationConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    try {
        // A preset applies first so explicit turbulence keys in the same file win.
        if (j.contains("preset")) apply_preset(c, j.at("preset").get<std::string>());
        for (const auto& [key, v] : j.items()) {
            if (key == "preset") continue;
            else if (key == "d_over_r0") c.d_over_r0 = v.get<double>();
            else if (key == "corr") c.corr = v.get<double>();
            else if (key == "psf_kernel_size") c.psf_kernel_size = v.get<int>();
            else if (key == "epochs_init") c.epochs_init = v.get<int>();
            else if (key == "epochs_main") c.epochs_main = v.get<int>();
            else if (key == "warm_epochs") c.warm_epochs = v.get<int>();
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "n_frames") c.n_frames = v.get<int>();
            else if (key == "image_size") {
                const auto s = v.get<std::vector<int>>();
                if (s.size() != 2) throw ConfigError("image_size must be [rows, cols]");
                c.image_rows = s[0];
                c.image_cols = s[1];
            }
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "loss_weights") c.loss_weights = v.get<std::array<double, 3>>();
            else if (key == "max_displacement") c.max_displacement = v.get<double>();
            else if (key == "pe_bands") c.pe_bands = v.get<int>();
            else if (key == "generator_width") c.generator_width = v.get<int>();
            else if (key == "deformer_width") c.deformer_width = v.get<int>();
            else if (key == "num_modes") c.num_modes = v.get<int>();
            else if (key == "basis_size") c.basis_size = v.get<int>();
            else if (key == "basis_samples") c.basis_samples = v.get<int>();
            else if (key == "control_spacing") c.control_spacing = v.get<int>();
            else if (key == "pupil_resolution") c.pupil_resolution = v.get<int>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
}

RestorationConfig config_from_json(const nlohmann::json& j) {
    RestorationConfig c;
    merge_json(c, j);
    return c;
}

}  // namespace nert
