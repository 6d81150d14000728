#pragma once

#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "nert/config.hpp"
#include "nert/image.hpp"
#include "nert/nets.hpp"
#include "nert/psf_basis.hpp"
#include "nert/warp.hpp"

namespace nert {

/// Per-epoch losses. Phase 1 stores the generator fit in `a` and the
/// deformer identity residual in `b`; phase 2 stores its three terms.
struct LossRecord {
    int epoch = 0;  ///< 1-based, counted across phases
    int phase = 0;
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double total = 0.0;
};

/// Learnable modules of one observed frame.
struct FrameModel {
    nets::GridDeformer deformer;
    nets::BlurModule blur;
    std::uint64_t id = 0;  ///< seeds this frame's initialization
};

struct RestorationState {
    RestorationConfig config;
    std::shared_ptr<const optics::PsfBasis> basis;
    std::shared_ptr<nets::ImageGenerator> generator;
    std::vector<FrameModel> modules;
    FrameStack observed;
    CoordGrid uniform;

    int epoch = 0;
    int phase = 0;  ///< last phase run
    double learning_rate = 0.0;
    int lr_halvings = 0;
    double phase2_reference = 0.0;  ///< first loss of the current phase-2 run
    std::uint64_t next_module_id = 0;
    std::vector<LossRecord> history;
    double phase1_seconds = 0.0;
    double phase2_seconds = 0.0;

    int rows() const { return uniform.rows; }
    int cols() const { return uniform.cols; }
    int num_frames() const { return static_cast<int>(modules.size()); }
    std::vector<nets::ParameterGroup*> parameter_groups();
    /// Generator output on the uniform grid, clamped to [0, 1].
    Image restored() const;
};

/// PSF basis matching the config's turbulence and basis settings.
std::shared_ptr<const optics::PsfBasis> make_basis(const RestorationConfig& config);

/// Fresh state with randomly initialized modules; no optimization.
RestorationState init_state(const FrameStack& frames, const RestorationConfig& config,
                            std::shared_ptr<const optics::PsfBasis> basis = nullptr);

/// Loss and accumulated gradients of the identity-initialization objective.
LossRecord phase1_gradients(RestorationState& state);
/// Loss and accumulated gradients of the three-term consistency objective.
LossRecord phase2_gradients(RestorationState& state);
/// Phase-2 loss only.
LossRecord phase2_loss(const RestorationState& state);
/// Adam step on every group at the state's learning rate.
void apply_step(RestorationState& state);

/// Runs epochs_init identity-initialization epochs.
RestorationState phase1_init(const FrameStack& frames, const RestorationConfig& config,
                             std::shared_ptr<const optics::PsfBasis> basis = nullptr);
void run_phase1(RestorationState& state, int epochs);

/// Runs epochs_main joint epochs with the divergence guard and returns the restored image.
Image phase2_optimize(RestorationState& state, const RestorationConfig& config);
void run_phase2(RestorationState& state, int epochs);

struct AnytimeOptions {
    bool evict = true;
    /// When finite, the number of steps until the loss first falls to this
    /// level is reported.
    double target_loss = std::numeric_limits<double>::quiet_NaN();
};

struct AnytimeResult {
    Image restored;
    int epochs_run = 0;
    int epochs_to_target = -1;
    double final_loss = 0.0;
};

/// Adds modules for `new_frame` (identity deformer, fresh correlated blur),
/// evicts the oldest frame when the window exceeds n_frames, then runs
/// `epochs_warm` joint epochs.
AnytimeResult anytime_update(RestorationState& state, const Image& new_frame, int epochs_warm,
                             const AnytimeOptions& options = {});

struct RestorationResult {
    Image restored;
    RestorationState state;
};

/// Phase 1 then phase 2. Frames are resized to the configured image size.
RestorationResult restore(const FrameStack& frames, const RestorationConfig& config,
                          std::shared_ptr<const optics::PsfBasis> basis = nullptr);

/// Parameters, Adam moments, counters, loss history and config in one file.
void save_checkpoint(const RestorationState& state, const std::filesystem::path& path);
/// Rebuilds a state from a checkpoint; `frames` must be the observed window.
RestorationState load_checkpoint(const std::filesystem::path& path, const FrameStack& frames,
                                 std::shared_ptr<const optics::PsfBasis> basis = nullptr);

/// epoch,term_a,term_b,term_c,total,phase
std::string loss_history_csv(const std::vector<LossRecord>& history);

}  // namespace nert
