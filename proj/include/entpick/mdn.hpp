#pragma once

// Mixture density network mapping (height patch, insertion depth) to a
// Gaussian mixture over grasped mass.
//
// Architecture, all sizes from ModelConfig:
//   centre crop to input_side -> average pool by feature_downsample
//   -> [conv k x k, conv_channels, tanh -> average pool conv_pool]   (optional)
//   -> concat insertion depth (cm) -> dense tanh layers (hidden_sizes)
//   -> 3K head: mixing logits, means, raw scales.
//
// Means and scales are produced in normalized units and mapped back to grams
// through mass_offset / mass_scale, which train() fits to the training split.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "entpick/heap_sim.hpp"
#include "entpick/rng.hpp"

namespace entpick {

enum class MomentReduction { mixture, dominant };

struct ModelConfig {
    int components = 3;
    int input_side = 150;
    int feature_downsample = 10;
    int conv_channels = 8;
    int conv_kernel = 3;
    int conv_pool = 2;
    std::vector<int> hidden_sizes{128, 32};
    double sigma_floor = 0.1;
    double fixed_sigma = 0.0;  // > 0 pins every component's sigma to this value
    double learning_rate = 2e-3;
    double lr_final_fraction = 0.1;  // linear decay of the step size over training
    double weight_decay = 0.0;
    int epochs = 120;
    int batch_size = 16;
    std::uint64_t seed = 1;
    bool augment = true;
    MomentReduction reduction = MomentReduction::mixture;
    double height_scale = 0.1;
    double mass_offset = 0.0;
    double mass_scale = 1.0;
    std::array<double, 2> z_range_cm{0.0, 0.0};
};

void validate(const ModelConfig& cfg);
nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct ModelParams {
    ModelConfig config;
    std::vector<double> theta;
};

struct MixtureParams {
    std::vector<double> pi;
    std::vector<double> mu;
    std::vector<double> sigma;

    std::size_t size() const { return pi.size(); }
};

struct MassEstimate {
    double mu = 0.0;
    double sigma = 0.0;
};

enum class Split { train, eval };

/// One grasp record; obs.insertion_depth_cm carries the depth used.
struct Sample {
    PatchObservation obs;
    double mass_g = 0.0;
    Split split = Split::train;
};

std::size_t parameter_count(const ModelConfig& cfg);

/// Random initialization seeded from cfg.seed.
ModelParams init_params(const ModelConfig& cfg);
ModelParams zero_params(const ModelConfig& cfg);

/// Throws std::invalid_argument on a patch/params shape mismatch or a
/// non-positive insertion depth.
MixtureParams mdn_forward(const ModelParams& params, const PatchObservation& obs);

/// Same patch evaluated at several depths; the convolutional trunk runs once.
std::vector<MixtureParams> mdn_forward_depths(const ModelParams& params, const PatchObservation& obs,
                                              std::span<const double> depths_cm);

double mdn_log_pdf(const MixtureParams& mix, double mass_g);
double mdn_pdf(const MixtureParams& mix, double mass_g);

/// Mean negative log likelihood over the batch. Throws on an empty batch.
double nll_loss(const ModelParams& params, std::span<const Sample> batch);

/// Exact gradient of nll_loss with respect to params.theta.
std::vector<double> nll_grad(const ModelParams& params, std::span<const Sample> batch);

/// Mixture mean and total standard deviation.
MassEstimate mixture_moments(const MixtureParams& mix);
/// Mean and sigma of the heaviest component (lowest index on ties).
MassEstimate dominant_moments(const MixtureParams& mix);
MassEstimate reduce(const MixtureParams& mix, MomentReduction how);

PatchObservation flip_patch(const PatchObservation& obs, bool horizontal, bool vertical);
PatchObservation crop_patch(const PatchObservation& obs, int x0, int y0, int side);

/// Independent horizontal/vertical flips with probability 0.5 each, then a
/// random crop_side x crop_side window. Input must be kPatchSide square.
PatchObservation augment(const PatchObservation& obs, Rng& rng, int crop_side = 150);

namespace detail {

/// Centre-cropped, pooled and scaled network input for one patch.
std::vector<double> pooled_input(const ModelConfig& cfg, const PatchObservation& obs);

struct Prepared {
    std::vector<double> pooled;
    double depth_cm = 0.0;
    double mass_g = 0.0;
};

/// Loss of one prepared row; adds d(loss)/d(theta) into grad when non-empty.
double row_loss_grad(const ModelParams& params, const Prepared& row, std::span<double> grad);

}  // namespace detail

}  // namespace entpick
