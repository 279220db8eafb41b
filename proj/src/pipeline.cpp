#include "entpick/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace entpick {

namespace {

using nlohmann::json;

void emit(std::vector<TraceEvent>* events, std::string type, json data) {
    if (events) events->push_back({std::move(type), std::move(data)});
}

double measured_grasp(const GraspOutcome& g, const SimConfig& sim) {
    return quantize_mass(g.grasped_mass, sim.scale.resolution_g);
}

GraspOutcome default_grasp(HeapState& heap, const SimConfig& sim, int x, int y, double z_cm, Rng& rng) {
    return execute_grasp(heap, sim, x, y, z_cm, rng);
}

}  // namespace

std::vector<double> deep_class_training_depths_cm() { return {2.0, 3.0, 4.0}; }
std::vector<double> shallow_class_training_depths_cm() { return {1.0, 1.5, 2.0}; }

double controller_speed(double current_g, double target_g, double start_g, const ControllerConfig& cfg) {
    const double floor_g = target_g + cfg.stop_band_g;
    if (!(cfg.speed.v_min > 0.0) || cfg.speed.v_min > cfg.speed.v_max)
        throw std::invalid_argument("controller speeds need 0 < v_min <= v_max");
    if (current_g < 0.0 || current_g > start_g)
        throw std::invalid_argument("controller_speed needs start >= current >= 0");
    if (!(start_g > floor_g)) throw std::invalid_argument("controller_speed needs start > target + stop_band");
    const double frac = std::clamp((current_g - floor_g) / (start_g - floor_g), 0.0, 1.0);
    return cfg.speed.v_min + (cfg.speed.v_max - cfg.speed.v_min) * frac;
}

PostgraspResult run_postgrasp(GripperLoad& load, double measured_g, double target_g, ScaleSensor& scale,
                              const ControllerConfig& ctrl, const PostgraspConfig& post, double control_hz, Rng& rng,
                              int max_steps) {
    if (!(control_hz > 0.0)) throw std::invalid_argument("control_hz must be positive");
    PostgraspResult res;
    const double stop_at = target_g + ctrl.stop_band_g;
    const bool flat = !(measured_g > stop_at);
    for (int k = 0; k < max_steps; ++k) {
        const double t = k / control_hz;
        const double reading = scale.read(t);
        const double estimate = measured_g - reading;
        if (estimate < stop_at - kMassCompareEps) break;
        const double v = flat ? ctrl.speed.v_min : controller_speed(std::max(0.0, estimate), target_g, measured_g, ctrl);
        const double dropped = postgrasp_step(load, v, post, rng);
        scale.deposit(dropped, t);
        res.discarded_g += dropped;
        res.trace.push_back({t, v, dropped, reading, estimate});
    }
    res.final_mass_g = load.remaining_mass();
    return res;
}

GridPoint sample_grasp_site(const HeapState& heap, std::span<const double> z_pool_cm, double clearance_mm, Rng& rng) {
    if (z_pool_cm.empty()) throw std::invalid_argument("empty depth pool");
    const int half = kPatchSide / 2;
    if (heap.nx() < kPatchSide || heap.ny() < kPatchSide) throw std::invalid_argument("tray smaller than a patch");
    std::uniform_int_distribution<int> ux(half, heap.nx() - half);
    std::uniform_int_distribution<int> uy(half, heap.ny() - half);
    std::uniform_int_distribution<std::size_t> uz(0, z_pool_cm.size() - 1);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const int x = ux(rng);
        const int y = uy(rng);
        const double z = z_pool_cm[uz(rng)];
        if (surface_median_mm(heap, x, y) - z * 10.0 >= clearance_mm) return {x, y, z};
    }
    throw std::runtime_error("no grasp site clears the tray floor; the heap is too shallow");
}

CollectionResult run_collection(HeapState& heap, const SimConfig& sim, int n, const CollectionConfig& cfg, Rng& rng) {
    if (n < 2) throw std::invalid_argument("collection needs at least 2 grasps");
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0)
        throw std::invalid_argument("train_fraction must lie in (0, 1)");
    CollectionResult out;
    out.dataset.rows.reserve(static_cast<std::size_t>(n));
    out.heap_mass_trace.push_back(total_mass(heap));
    for (int i = 0; i < n; ++i) {
        const GridPoint p = sample_grasp_site(heap, cfg.z_pool_cm, cfg.clearance_mm, rng);
        PatchObservation obs = observe_patch(heap, p.x, p.y);
        obs.insertion_depth_cm = p.z_cm;
        if (cfg.pregrasp) apply_pregrasp(heap, sim, p.x, p.y, p.z_cm);
        const GraspOutcome g = execute_grasp(heap, sim, p.x, p.y, p.z_cm, rng);
        out.dataset.rows.push_back({std::move(obs), measured_grasp(g, sim), Split::train});
        out.true_masses.push_back(g.grasped_mass);
        out.heap_mass_trace.push_back(total_mass(heap));
    }
    // Seeded split: a shuffled index prefix goes to training.
    const auto n_train = static_cast<std::size_t>(std::lround(cfg.train_fraction * n));
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = n_train; k < order.size(); ++k) out.dataset.rows[order[k]].split = Split::eval;
    return out;
}

std::string to_string(EpisodeStatus s) {
    switch (s) {
        case EpisodeStatus::placed: return "placed";
        case EpisodeStatus::failed_to_grasp: return "failed_to_grasp";
        case EpisodeStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

bool EpisodeResult::within(double band_g) const {
    return status == EpisodeStatus::placed && std::abs(final_mass_g - target_g) <= band_g + kMassCompareEps;
}

EpisodeResult run_inference_episode(const ModelParams& model, HeapState& heap, const SimConfig& sim,
                                    const EpisodeConfig& cfg, Rng& rng, const GraspFn& grasp_fn) {
    if (cfg.max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
    const GraspFn& grasp = grasp_fn ? grasp_fn : GraspFn(default_grasp);
    EpisodeResult res;
    res.target_g = cfg.selection.target_g;
    std::vector<TraceEvent>* ev = cfg.record_events ? &res.events : nullptr;
    const double heap_before = total_mass(heap);
    const double retry_at = cfg.selection.target_g - cfg.controller.retry_band_g;
    const double post_at = cfg.selection.target_g + cfg.controller.stop_band_g;

    for (int attempt = 0;; ++attempt) {
        ++res.wall_steps;
        emit(ev, "observe", {{"attempt", attempt}});
        const SelectionReport report = select_grasp(model, heap, cfg.selection);
        const Candidate* c = report.chosen();
        if (!c) {
            res.status = EpisodeStatus::infeasible;
            emit(ev, "fail", {{"reason", "infeasible"}, {"candidates", report.candidates.size()}});
            break;
        }
        res.chosen = {c->x, c->y, c->z_cm};
        res.predicted = {c->mu, c->sigma};
        emit(ev, "select", {{"x", c->x}, {"y", c->y}, {"z_cm", c->z_cm}, {"mu_g", c->mu}, {"sigma_g", c->sigma}});
        if (cfg.pregrasp) {
            apply_pregrasp(heap, sim, c->x, c->y, c->z_cm);
            emit(ev, "pregrasp", {{"x", c->x}, {"y", c->y}});
        }
        const GraspOutcome g = grasp(heap, sim, c->x, c->y, c->z_cm, rng);
        res.grasped_initial_g = g.grasped_mass;
        res.grasped_measured_g = measured_grasp(g, sim);
        emit(ev, "grasp", {{"true_g", g.grasped_mass}, {"base_g", g.base_mass}, {"clumps", g.clump_masses.size()}});
        emit(ev, "scale", {{"grasp_reading_g", res.grasped_measured_g}});

        if (res.grasped_measured_g <= retry_at + kMassCompareEps && cfg.retry) {
            release_to_heap(heap, sim, c->x, c->y, g.grasped_mass);
            emit(ev, "release", {{"mass_g", g.grasped_mass}});
            if (attempt >= cfg.max_retries) {
                res.status = EpisodeStatus::failed_to_grasp;
                emit(ev, "fail", {{"reason", "retry_limit"}});
                break;
            }
            ++res.retries;
            continue;
        }

        GripperLoad load = make_load(g, cfg.spines);
        if (cfg.postgrasp && res.grasped_measured_g >= post_at - kMassCompareEps) {
            ScaleSensor scale(sim.scale);
            Rng post_rng = make_rng(rng());
            PostgraspResult pr = run_postgrasp(load, res.grasped_measured_g, cfg.selection.target_g, scale,
                                               cfg.controller, sim.postgrasp, sim.scale.control_hz, post_rng);
            res.discarded_g = pr.discarded_g;
            res.wall_steps += static_cast<int>(pr.trace.size());
            if (ev)
                for (const auto& s : pr.trace)
                    emit(ev, "poststep",
                         {{"t_s", s.t_s}, {"v", s.speed}, {"dropped_g", s.dropped_g}, {"reading_g", s.reading_g},
                          {"estimate_g", s.estimate_g}});
            res.postgrasp_trace = std::move(pr.trace);
        }
        res.final_mass_g = load.remaining_mass();
        res.status = EpisodeStatus::placed;
        emit(ev, "place", {{"mass_g", res.final_mass_g}});
        break;
    }
    res.residual_g = 0.0;
    res.heap_loss_g = heap_before - total_mass(heap);
    return res;
}

DropTrialResult run_drop_trial(HeapState& heap, const SimConfig& sim, const DropTrialConfig& cfg, Rng& rng) {
    if (!(cfg.drop_g > 0.0)) throw std::invalid_argument("drop_g must be positive");
    DropTrialResult res;
    const double heap_before = total_mass(heap);
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        const GridPoint p = sample_grasp_site(heap, cfg.z_pool_cm, cfg.clearance_mm, rng);
        if (cfg.pregrasp) apply_pregrasp(heap, sim, p.x, p.y, p.z_cm);
        const GraspOutcome g = execute_grasp(heap, sim, p.x, p.y, p.z_cm, rng);
        const double measured = measured_grasp(g, sim);
        if (measured < cfg.drop_g + cfg.regrasp_margin_g) {
            release_to_heap(heap, sim, p.x, p.y, g.grasped_mass);
            if (attempt < cfg.max_retries) ++res.retries;
            continue;
        }
        res.completed = true;
        res.grasped_measured_g = measured;
        res.target_g = measured - cfg.drop_g;
        GripperLoad load = make_load(g, cfg.spines);
        ScaleSensor scale(sim.scale);
        Rng post_rng = make_rng(rng());
        const PostgraspResult pr = run_postgrasp(load, measured, res.target_g, scale, cfg.controller, sim.postgrasp,
                                                 sim.scale.control_hz, post_rng);
        res.final_mass_g = pr.final_mass_g;
        res.discarded_g = pr.discarded_g;
        break;
    }
    res.heap_loss_g = heap_before - total_mass(heap);
    return res;
}

void write_events_jsonl(const std::vector<TraceEvent>& events, std::ostream& out, int episode) {
    for (const auto& e : events) {
        json line{{"type", e.type}, {"data", e.data}};
        if (episode >= 0) line["episode"] = episode;
        out << line.dump() << '\n';
    }
}

}  // namespace entpick
