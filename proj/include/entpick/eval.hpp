#pragma once

// Experiment presets, success statistics and bootstrap reporting.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "entpick/dataset.hpp"
#include "entpick/heap_sim.hpp"
#include "entpick/mdn.hpp"
#include "entpick/pipeline.hpp"
#include "entpick/training.hpp"

namespace entpick {

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value. p in (0, 100].
double nearest_rank_percentile(std::span<const double> values, double p);

/// Percentiles of the training-split masses. Throws on an empty split.
std::vector<double> percentile_targets(const Dataset& ds, std::span<const double> percentiles);

/// Fraction of finals with |final - target| <= band. Throws on empty input.
double success_rate(std::span<const double> finals, double target_g, double band_g);

struct BootstrapStat {
    double mean_pct = 0.0;
    double std_pct = 0.0;
};

/// Resamples the outcomes with replacement `resamples` times (>= 1000) and
/// reports mean and standard deviation of the resampled success rate.
BootstrapStat bootstrap(std::span<const std::uint8_t> successes, int resamples, std::uint64_t seed);

struct Histogram {
    double bin_width_g = 2.0;
    double origin_g = 0.0;  // lower edge of bins[0]
    std::vector<int> counts;

    double lo(std::size_t i) const { return origin_g + bin_width_g * static_cast<double>(i); }
    int total() const;
};

/// Bins aligned to multiples of bin_width. Throws on bin_width <= 0 or empty input.
Histogram mass_histogram(std::span<const double> masses, double bin_width_g);
Histogram mass_histogram(const Dataset& ds, double bin_width_g);

/// Bin indices of local maxima of the moving average (window bins, zero
/// padded). A maximum counts only if it rises at least min_prominence_frac of
/// the highest smoothed count above the deepest dip separating it from every
/// higher maximum (the global maximum always counts).
std::vector<std::size_t> histogram_modes(const Histogram& h, int window = 3, double min_prominence_frac = 0.0);

nlohmann::json to_json(const Histogram& h);

enum class PresetKind { grasp_selection, drop_pregrasp, drop_spines, full_method, histogram };

struct Variant {
    std::string label;
    double alpha = 1.0;
    bool pregrasp = true;
    bool postgrasp = true;
    bool spines = true;
    bool retry = true;
};

struct ExperimentPreset {
    std::string name;
    PresetKind kind = PresetKind::full_method;
    std::vector<Variant> variants;
    std::vector<double> percentiles{10.0, 50.0, 70.0};
    std::vector<double> targets_g;  // explicit targets; overrides percentiles when set
    std::vector<double> drops_g;
    std::vector<double> bands_g;
    int episodes = 200;
    int episodes_per_heap = 20;
    int bootstrap_resamples = 10000;
    std::uint64_t seed = 2024;
    std::vector<double> inference_depths_cm = deep_class_depths_cm();
    std::vector<double> collection_depths_cm = deep_class_training_depths_cm();
    int collection_n = 200;
    double histogram_bin_g = 2.0;
    double histogram_single_depth_cm = 3.0;
    double mode_prominence_frac = 0.0;
    bool record_events = false;  // keep per-episode traces in the report
    nlohmann::json reference;  // published numbers, for side-by-side reading only
};

/// Percentile studies need >= 30 episodes per cell; runs with explicit
/// targets accept any positive count.
void validate(const ExperimentPreset& p);

std::vector<std::string> preset_names();
/// Throws std::invalid_argument listing the available presets.
ExperimentPreset preset_by_name(const std::string& name);

struct ExperimentInputs {
    const ModelParams* model = nullptr;  // required for grasp_selection / full_method
    const Dataset* dataset = nullptr;    // percentile targets unless targets_g is set; histogram source
};

struct EpisodeRecord {
    std::string variant;
    double target_g = 0.0;
    double drop_g = 0.0;
    int index = 0;
    std::string status;
    double grasped_g = 0.0;
    double final_g = 0.0;
    int retries = 0;
    bool success_first_grasp = false;
    GridPoint chosen;          // last selected grasp (model presets)
    MassEstimate predicted;
    double discarded_g = 0.0;
    double heap_loss_g = 0.0;
    int wall_steps = 0;
    std::vector<PostStep> postgrasp_trace;
    std::vector<TraceEvent> events;  // only with record_events
};

struct ReportCell {
    std::string variant;
    double target_g = 0.0;  // grasp-target presets
    double drop_g = 0.0;    // drop presets
    double band_g = 0.0;
    int successes = 0;
    int episodes = 0;
    double mean_pct = 0.0;
    double std_pct = 0.0;
};

struct RegraspRate {
    std::string variant;
    double target_g = 0.0;
    double drop_g = 0.0;
    double pct = 0.0;
};

struct HistogramReport {
    std::string label;
    std::vector<double> depths_cm;
    Histogram histogram;
    std::vector<std::size_t> modes;
};

struct ExperimentReport {
    std::string preset;
    std::vector<double> targets_g;
    std::vector<double> bands_g;
    std::vector<ReportCell> cells;
    std::vector<RegraspRate> regrasp;
    std::vector<EpisodeRecord> episodes;
    std::vector<HistogramReport> histograms;
    nlohmann::json seeds;
    nlohmann::json reference;

    const ReportCell* find(const std::string& variant, double key_g, double band_g) const;
};

struct PreparedInputs {
    Dataset dataset;
    TrainResult training;
};

/// Collects preset.collection_n grasps on a fresh heap seeded from preset.seed
/// and trains `model_cfg` on them.
PreparedInputs prepare_inputs(const ExperimentPreset& preset, const SimConfig& sim, const ModelConfig& model_cfg);

/// Runs every episode of the preset. Heaps are shared across variants (same
/// seeds), refreshed every episodes_per_heap episodes. `workers` threads split
/// the heap blocks; the report does not depend on the worker count.
ExperimentReport run_experiment(const ExperimentPreset& preset, const SimConfig& sim, const ExperimentInputs& in,
                                int workers = 1);

nlohmann::json to_json(const ExperimentReport& r);

}  // namespace entpick
