#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "nert/optics.hpp"
#include "nert/psf_basis.hpp"

namespace nert {

/// Every tunable of a restoration run.
struct RestorationConfig {
    std::string preset = "air";
    double d_over_r0 = 5.0;
    double corr = -5.0;
    int psf_kernel_size = 11;

    int epochs_init = 1000;
    int epochs_main = 1000;
    int warm_epochs = 60;
    double learning_rate = 1e-4;
    int n_frames = 20;
    int image_rows = 256;
    int image_cols = 256;
    std::uint64_t seed = 0;
    std::array<double, 3> loss_weights{1.0, 1.0, 1.0};
    double max_displacement = 0.05;
    int pe_bands = 6;

    int generator_width = 256;
    int deformer_width = 256;
    int num_modes = optics::kDefaultModes;
    int basis_size = optics::kDefaultBasisSize;
    int basis_samples = optics::kDefaultBasisSamples;
    int control_spacing = 16;
    int pupil_resolution = 0;

    optics::TurbulenceParams turbulence() const { return {d_over_r0, corr, psf_kernel_size}; }
    /// Throws ConfigError on any out-of-range value.
    void validate() const;
};

/// Named turbulence settings: "air" (5.0, -5.0, 11) and "water" (0.1, -5.0, 5).
optics::TurbulenceParams preset_params(const std::string& name);
/// Overwrites the turbulence fields and preset name.
void apply_preset(RestorationConfig& config, const std::string& name);

nlohmann::json to_json(const RestorationConfig& config);
/// Overlays the keys present in `j` onto `config`; unknown keys are a ConfigError.
void merge_json(RestorationConfig& config, const nlohmann::json& j);
RestorationConfig config_from_json(const nlohmann::json& j);

}  // namespace nert
