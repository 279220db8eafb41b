#pragma once

// Grid search over (x, y, z) grasp candidates with the uncertainty-penalized
// selection rule: among candidates whose predicted mean exceeds
// target + alpha * sigma, take the one minimizing |target - mu| + sigma.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "entpick/heap_sim.hpp"
#include "entpick/mdn.hpp"

namespace entpick {

/// Insertion depths evaluated at inference for the two food classes.
std::vector<double> deep_class_depths_cm();     // 2.0 .. 4.0 cm in 0.25 cm steps
std::vector<double> shallow_class_depths_cm();  // 1.0 .. 2.0 cm in 0.25 cm steps

struct SelectionConfig {
    double target_g = 0.0;
    double alpha = 1.0;
    int stride_px = 15;
    std::vector<double> z_candidates_cm = deep_class_depths_cm();
    int margin_px = kPatchSide / 2;
    double clearance_mm = 5.0;
};

void validate(const SelectionConfig& cfg);

struct GridPoint {
    int x = 0;
    int y = 0;
    double z_cm = 0.0;
};

struct Candidate {
    std::size_t index = 0;  // canonical enumeration order
    int x = 0;
    int y = 0;
    double z_cm = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
    bool feasible = false;
    double score = 0.0;
};

/// Row-major (y, then x, then z) lattice over the interior of a nx x ny tray,
/// centred in each axis. An empty interior yields an empty list.
std::vector<GridPoint> enumerate_candidates(int nx, int ny, const SelectionConfig& cfg);

/// mu + alpha*sigma constraint, strict, with infinite sigma never feasible.
bool is_feasible(double mu, double sigma, double target_g, double alpha);
double selection_score(double mu, double sigma, double target_g);

/// Fills feasible/score for a candidate from its mu/sigma.
void judge(Candidate& c, double target_g, double alpha);

/// Lowest (score, index) among feasible candidates, as a position in `cands`.
std::optional<std::size_t> select_best(std::span<const Candidate> cands);

/// (mu, sigma) for one grasp point; collision-risk points give (0, +inf).
MassEstimate score_candidate(const ModelParams& model, const HeapState& heap, int x, int y, double z_cm,
                             double clearance_mm = 5.0);

struct SelectionReport {
    std::vector<Candidate> candidates;
    std::optional<std::size_t> winner;

    const Candidate* chosen() const { return winner ? &candidates[*winner] : nullptr; }
};

SelectionReport select_grasp(const ModelParams& model, const HeapState& heap, const SelectionConfig& cfg);

nlohmann::json to_json(const SelectionReport& report);

}  // namespace entpick
