#pragma once

// End-to-end state machines: data collection with random grasps, and the
// inference episode (select, pre-grasp, grasp, retry or post-grasp, place).

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "entpick/dataset.hpp"
#include "entpick/grasp_select.hpp"
#include "entpick/heap_sim.hpp"
#include "entpick/mdn.hpp"

namespace entpick {

std::vector<double> deep_class_training_depths_cm();     // {2.0, 3.0, 4.0}
std::vector<double> shallow_class_training_depths_cm();  // {1.0, 1.5, 2.0}

struct ControllerConfig {
    SpeedRange speed;
    double stop_band_g = 2.0;
    double retry_band_g = 2.0;
};

/// Comparison slack for thresholds on 0.1 g quantized readings.
inline constexpr double kMassCompareEps = 1e-9;

/// Cycle speed for the movable gripper, linear in the remaining excess over
/// target + stop_band. Throws std::invalid_argument on violated preconditions.
double controller_speed(double current_g, double target_g, double start_g, const ControllerConfig& cfg);

struct PostStep {
    double t_s = 0.0;
    double speed = 0.0;
    double dropped_g = 0.0;
    double reading_g = 0.0;   // scale reading of discarded mass
    double estimate_g = 0.0;  // grasped mass estimate the guard saw
};

struct PostgraspResult {
    double final_mass_g = 0.0;  // true mass left in the gripper
    double discarded_g = 0.0;   // true mass that fell
    std::vector<PostStep> trace;
};

/// Cycles the movable gripper while target + stop_band <= estimate, where the
/// estimate is `measured_g` minus the scale's reading of discarded food.
PostgraspResult run_postgrasp(GripperLoad& load, double measured_g, double target_g, ScaleSensor& scale,
                              const ControllerConfig& ctrl, const PostgraspConfig& post, double control_hz, Rng& rng,
                              int max_steps = 3600);

struct CollectionResult {
    Dataset dataset;
    std::vector<double> true_masses;  // unquantized grasped masses, in row order
    std::vector<double> heap_mass_trace;  // heap mass before the first and after every grasp
};

struct CollectionConfig {
    std::vector<double> z_pool_cm = deep_class_training_depths_cm();
    double train_fraction = 0.75;
    double clearance_mm = 5.0;
    bool pregrasp = true;
};

/// N random grasps on `heap`: observe, pick (x, y) and z from the pool, pre-grasp,
/// grasp, weigh, place outside the tray. Split 150/50 for N = 200.
CollectionResult run_collection(HeapState& heap, const SimConfig& sim, int n, const CollectionConfig& cfg, Rng& rng);

/// Random grasp site where every depth drawn keeps `clearance_mm` above the floor.
GridPoint sample_grasp_site(const HeapState& heap, std::span<const double> z_pool_cm, double clearance_mm, Rng& rng);

enum class EpisodeStatus { placed, failed_to_grasp, infeasible };
std::string to_string(EpisodeStatus s);

struct TraceEvent {
    std::string type;  // observe, select, pregrasp, grasp, release, poststep, scale, place, fail
    nlohmann::json data;
};

struct EpisodeConfig {
    SelectionConfig selection;  // carries target and alpha
    ControllerConfig controller;
    bool pregrasp = true;
    bool postgrasp = true;
    bool spines = true;
    bool retry = true;
    int max_retries = 10;
    bool record_events = false;
};

struct EpisodeResult {
    EpisodeStatus status = EpisodeStatus::placed;
    double target_g = 0.0;
    GridPoint chosen;
    MassEstimate predicted;
    double grasped_initial_g = 0.0;   // true mass of the last grasp
    double grasped_measured_g = 0.0;  // scale-quantized mass of the last grasp
    int retries = 0;
    std::vector<PostStep> postgrasp_trace;
    double final_mass_g = 0.0;  // placed mass (0 unless placed)
    double discarded_g = 0.0;
    double residual_g = 0.0;
    double heap_loss_g = 0.0;
    int wall_steps = 0;
    std::vector<TraceEvent> events;

    bool within(double band_g) const;
};

/// Stand-in for execute_grasp, used to force grasp outcomes.
using GraspFn = std::function<GraspOutcome(HeapState&, const SimConfig&, int, int, double, Rng&)>;

/// Select, pre-grasp, grasp; release and retry while the weighed grasp is at or
/// below target - retry_band; post-grasp when it is at or above target +
/// stop_band; then place. A retry limit ends the episode as failed_to_grasp.
EpisodeResult run_inference_episode(const ModelParams& model, HeapState& heap, const SimConfig& sim,
                                    const EpisodeConfig& cfg, Rng& rng, const GraspFn& grasp = {});

/// Grasp followed by post-grasp to a fixed drop below the grasped amount.
struct DropTrialConfig {
    double drop_g = 10.0;
    double regrasp_margin_g = 5.0;  // re-grasp while grasped < drop + margin
    std::vector<double> z_pool_cm = deep_class_training_depths_cm();
    double clearance_mm = 5.0;
    bool pregrasp = true;
    bool spines = true;
    int max_retries = 10;
    ControllerConfig controller;
};

struct DropTrialResult {
    bool completed = false;  // false when every attempt stayed below the re-grasp threshold
    double grasped_measured_g = 0.0;
    double target_g = 0.0;  // measured grasp minus drop
    double final_mass_g = 0.0;
    int retries = 0;
    double heap_loss_g = 0.0;
    double discarded_g = 0.0;
};

DropTrialResult run_drop_trial(HeapState& heap, const SimConfig& sim, const DropTrialConfig& cfg, Rng& rng);

/// One {"type", "data"[, "episode"]} object per line; episode < 0 omits the field.
void write_events_jsonl(const std::vector<TraceEvent>& events, std::ostream& out, int episode = -1);

}  // namespace entpick
