#pragma once

// Stochastic tray simulator for entangled food: a height field with hidden
// entanglement and bulk-density fields, plus the grasp, pre-grasp, post-grasp
// and weighing-scale models the picking pipeline acts on.
//
// Units: lengths in mm (one cell is 1 mm x 1 mm), insertion depths in cm,
// densities in g/cm^3, masses in g, times in s.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "entpick/grid.hpp"
#include "entpick/rng.hpp"

namespace entpick {

inline constexpr int kPatchSide = 160;
inline constexpr double kHeightQuantumMm = 0.1;

struct TrayDims {
    double width_mm = 424.0;
    double depth_mm = 308.0;
    double height_mm = 160.0;

    bool operator==(const TrayDims&) const = default;
};

struct NoiseConfig {
    double amplitude_mm = 4.0;        // large-scale undulation of the surface
    double feature_mm = 32.0;         // lattice spacing of the undulation
    double roughness_mm = 1.0;        // fine texture
    double roughness_feature_mm = 4.0;
    double field_feature_mm = 48.0;   // lattice spacing of the lambda and rho fields
};

struct PregraspConfig {
    double beta = 0.35;       // entanglement multiplier inside the radius
    double fluff = 1.15;      // height multiplier inside the radius (density / fluff)
    double radius_mm = 40.0;
};

struct SpeedRange {
    double v_min = 0.2;
    double v_max = 1.0;
};

struct PostgraspConfig {
    double gamma_shape = 2.0;
    double gamma_scale = 0.1;        // g per unit of cycle speed
    double p_clump = 0.08;           // spines off: whole-clump release per cycle
    double hang_drop_prob = 0.04;    // hanging entangled clump detaches per cycle
    SpeedRange speed;
};

struct ScaleConfig {
    double resolution_g = 0.1;
    double rate_hz = 10.0;
    int lag = 1;                  // samples between landing and registering
    double transient_gain = 0.5;  // impulse overshoot per gram landed in one sample
    double control_hz = 30.0;     // post-grasp gripper cycle rate
};

// Settling after a grasp or release. The local share of the height change is
// spread by a Gaussian; the global share is taken evenly from the whole heap.
// Loosened food near a grasp returns to its resting state by `recovery`.
struct RelaxConfig {
    double sigma_mm = 15.0;
    double global_share = 0.8;
    double recovery = 1.0;
};

struct LogNormalParams {
    double mu = 1.0;
    double sigma = 0.5;
};

struct SimConfig {
    TrayDims tray;
    double fill_mm = 100.0;
    NoiseConfig noise;
    std::array<double, 2> lambda_range{0.2, 0.9};
    double lambda_surface_coupling = 0.6;  // share of lambda that follows the surface undulation
    std::array<double, 2> rho_range{0.85, 1.05};
    std::array<double, 2> footprint_mm{40.0, 22.5};
    double eta_fill = 1.0;
    double kappa = 3.0;
    LogNormalParams clump_lognormal;
    double clump_reach_mm = 10.0;
    PregraspConfig pregrasp;
    PostgraspConfig postgrasp;
    ScaleConfig scale;
    RelaxConfig relax;
};

/// Throws std::invalid_argument describing the first violated constraint.
void validate(const SimConfig& cfg);

SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& cfg);
SimConfig load_sim_config(const std::string& path);

struct HeapState {
    Grid<double> height_mm;
    Grid<double> entanglement;  // lambda in [0, 1]
    Grid<double> density;       // rho in g/cm^3
    Grid<double> rest_entanglement;  // values before any pre-grasp loosening
    Grid<double> rest_density;
    TrayDims tray;
    std::uint64_t seed = 0;

    int nx() const { return height_mm.nx(); }
    int ny() const { return height_mm.ny(); }
    bool operator==(const HeapState&) const = default;
};

HeapState init_heap(const SimConfig& cfg, std::uint64_t seed);

/// Sum of rho * area * height over all cells, in grams.
double total_mass(const HeapState& heap);

/// Square height patch relative to its own median surface, quantized to
/// kHeightQuantumMm. insertion_depth_cm is 0 until the caller picks a depth.
struct PatchObservation {
    int side = 0;
    std::vector<double> heights;
    double insertion_depth_cm = 0.0;
    double surface_mm = 0.0;

    double at(int x, int y) const { return heights[static_cast<std::size_t>(y) * side + x]; }
};

/// Quantizes to kHeightQuantumMm and subtracts the median. Returns the median
/// (in mm) through `median_mm` when non-null.
std::vector<double> median_normalize(std::span<const double> heights_mm, double* median_mm = nullptr);

/// Throws std::out_of_range when the patch does not fit inside the tray.
PatchObservation observe_patch(const HeapState& heap, int x, int y, int side = kPatchSide);

/// Median surface height of the patch centred at (x, y), clipped to the tray.
double surface_median_mm(const HeapState& heap, int x, int y, int side = kPatchSide);

struct GraspOutcome {
    double grasped_mass = 0.0;
    double base_mass = 0.0;
    double entangled_extra = 0.0;
    std::vector<double> clump_masses;
};

/// Removes the gripped column plus Poisson-many entangled clumps from the heap.
/// Throws std::out_of_range if the footprint leaves the tray and
/// std::invalid_argument if the gripper bottom would go below the tray floor.
GraspOutcome execute_grasp(HeapState& heap, const SimConfig& cfg, int x, int y, double z_cm, Rng& rng);

/// Lift-and-release at (x, y): entanglement scaled by beta and the material
/// fluffed up inside the pre-grasp radius, with no change in mass.
void apply_pregrasp(HeapState& heap, const SimConfig& cfg, int x, int y, double z_cm);

/// Returns `mass_g` to the heap spread evenly over the gripper footprint.
void release_to_heap(HeapState& heap, const SimConfig& cfg, int x, int y, double mass_g);

/// What the gripper holds. clumps[0] is the portion between the fingers; the
/// rest are entangled clumps hanging outside the gripper.
struct GripperLoad {
    std::vector<double> clump_masses;
    bool spines_enabled = true;

    double remaining_mass() const;
};

GripperLoad make_load(const GraspOutcome& outcome, bool spines_enabled);

/// One up/down cycle of the movable gripper at speed v. Returns the mass that
/// fell. Throws std::invalid_argument when v is outside the speed range.
double postgrasp_step(GripperLoad& load, double v, const PostgraspConfig& cfg, Rng& rng);

/// Quantile of a single spined drop at speed v (hanging clumps excluded).
double spine_drop_quantile(const PostgraspConfig& cfg, double v, double q);

double quantize_mass(double mass_g, double resolution_g);

struct ScaleReading {
    double t_s = 0.0;
    double value_g = 0.0;
};

/// Weighing scale under the tray measuring discarded food: quantized, sampled
/// at rate_hz, delayed by `lag` samples and overshooting by transient_gain
/// times the mass that landed in the most recent registered sample.
class ScaleSensor {
public:
    explicit ScaleSensor(const ScaleConfig& cfg);

    /// Food lands at time t_s. Times must be non-decreasing.
    void deposit(double mass_g, double t_s);

    /// Reading of the latest sample at or before t_s.
    double read(double t_s);

    double true_discarded() const { return total_; }
    const std::vector<ScaleReading>& readings() const { return readings_; }
    const ScaleConfig& config() const { return cfg_; }

private:
    double landed_by_sample(long n) const;
    double sample_value(long n) const;

    ScaleConfig cfg_;
    std::vector<double> deposit_times_;
    std::vector<double> deposit_cumulative_;
    double total_ = 0.0;
    long last_emitted_ = -1;
    std::vector<ScaleReading> readings_;
};

}  // namespace entpick
