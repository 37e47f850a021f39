#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trl3d/app/config.hpp"
#include "trl3d/backbone.hpp"
#include "trl3d/core/optim.hpp"
#include "trl3d/losses.hpp"
#include "trl3d/metrics.hpp"
#include "trl3d/synthdata.hpp"

namespace trl3d {

// ---- config plumbing ----

DataConfig data_config(const RunConfig& cfg);
/// Image and patch sizes follow the data settings.
BackboneConfig backbone_config(const RunConfig& cfg);
TcnConfig tcn_config(const RunConfig& cfg);

struct TrainOptions {
    std::string optimizer = "adam";  // "adam" or "sgd"
    double lr = 0.001;
    double momentum = 0.9;
    std::string schedule = "constant";  // "constant" or "cosine"
    std::size_t steps = 600;
    std::size_t batch = 16;
    std::uint64_t seed = 1;
};
TrainOptions train_options(const RunConfig& cfg);
std::unique_ptr<Optimizer> make_optimizer(const Model& model, const TrainOptions& opt);
/// Learning rate for update `step` (0-based) under the configured schedule.
double scheduled_lr(const TrainOptions& opt, std::size_t step);

/// Ablation variants: baseline, mlp, trl3d, direct_xyz, concat.
BackboneConfig apply_variant(BackboneConfig cfg, const std::string& variant);
const std::vector<std::string>& ablation_variants();

// ---- batching ----

Tensor stack_images(const std::vector<const ViewSample*>& views);
Tensor stack_frames(const SampleSequence& seq);

// ---- classification ----

/// Mini-batch training on the "train" split; returns the loss of every step.
std::vector<double> train_classifier(Model& model, const Dataset& ds, const TrainOptions& opt);
double classification_accuracy(const Model& model, const Dataset& ds, const std::string& split);

// ---- alignment ----

/// Called with the number of completed steps.
using StepHook = std::function<void(std::size_t step, const Model& model)>;

/// Symmetric time-contrastive training over the "train" pairs. `hook` runs
/// for every step listed in `hook_steps` (0 means before the first update).
std::vector<double> train_alignment(Model& model, const Dataset& ds, const TrainOptions& opt, const TcnConfig& tcn,
                                    const std::vector<std::size_t>& hook_steps = {}, const StepHook& hook = {});

Embeddings embed_sequence(const Model& model, const SampleSequence& seq);

struct PairAlignment {
    std::size_t pair_id = 0;
    std::size_t frames = 0;
    AlignmentReport a_to_b;
    AlignmentReport b_to_a;
};

std::vector<PairAlignment> evaluate_alignment_split(const Model& model, const Dataset& ds, const std::string& split);

struct AlignmentSummary {
    double alignment_error = 0.0;
    double cycle_error = 0.0;
    double kendall_tau = 0.0;
};
/// Means over pairs of the A -> B direction.
AlignmentSummary summarize(const std::vector<PairAlignment>& rows);

// ---- depth and camera ----

struct DepthCorrelation {
    double fisher_r = 0.0;
    std::size_t frames = 0;     // frames that contributed a correlation
    double coverage = 0.0;      // fraction of patches with ground-truth depth
};

/// Per-frame pearson_r between pseudo-depth of the first inserted 3DTRL and
/// ground-truth patch depth over lit patches, fisher-averaged over every
/// frame of `split`. With `random_seed` set, predictions are replaced by
/// uniform noise (the random baseline).
DepthCorrelation depth_correlation(const Model& model, const Dataset& ds, const std::string& split,
                                   std::optional<std::uint64_t> random_seed = std::nullopt);

/// Per-frame camera estimates of the first inserted 3DTRL.
std::vector<CameraExtrinsics> estimate_sequence_cameras(const Model& model, const SampleSequence& seq);

struct PairDisparity {
    std::size_t pair_id = 0;
    DisparityReport report;
};
/// Disparity of the moving camera ("b" view) of every pair in `split`.
std::vector<PairDisparity> evaluate_camera_split(const Model& model, const Dataset& ds, const std::string& split);

// ---- gradient check ----

struct GradcheckRow {
    std::string name;
    std::size_t checks = 0;
    std::size_t resamples = 0;  // probes discarded for crossing a relu kink
    double max_rel_error = 0.0;
    bool pass = false;
};

struct GradcheckOptions {
    std::size_t entries = 3;  // random single entries per tensor, plus one random direction
    double step = 1e-5;
    double tolerance = 1e-4;
    double denominator_floor = 1e-6;  // above finite-difference roundoff for O(1) losses
    std::size_t max_resamples = 16;
    std::size_t batch = 2;
    std::uint64_t seed = 1;
};

/// Central finite differences against backprop for every parameter tensor
/// of a model whose parameters (including zero-initialised ones) have been
/// randomly perturbed.
std::vector<GradcheckRow> gradcheck(const BackboneConfig& cfg, const GradcheckOptions& opt);

// ---- ablation ----

struct AblationRow {
    std::string variant;
    std::uint64_t seed = 0;
    std::size_t parameters = 0;
    double test_accuracy = 0.0;
    double unseen_accuracy = 0.0;
};

std::vector<AblationRow> run_ablation(const BackboneConfig& base, const Dataset& ds, const TrainOptions& opt,
                                      const std::vector<std::string>& variants, const std::vector<std::uint64_t>& seeds);

}  // namespace trl3d
