#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "entpick/dataset.hpp"
#include "entpick/heap_sim.hpp"
#include "entpick/mdn.hpp"
#include "entpick/rng.hpp"

namespace entpick::testing {

// Noise-free heap: every cell at `fill_mm`, uniform density `rho`.
inline SimConfig flat_config(double fill_mm = 50.0, double rho = 0.08) {
    SimConfig c;
    c.fill_mm = fill_mm;
    c.noise.amplitude_mm = 0.0;
    c.noise.roughness_mm = 0.0;
    c.rho_range = {rho, rho};
    return c;
}

// Network with all weights zero: every input maps to mu = mu_g and the same sigma.
inline ModelParams constant_model(double mu_g, int components = 1) {
    ModelConfig cfg;
    cfg.components = components;
    cfg.conv_channels = 0;
    cfg.hidden_sizes = {8};
    cfg.mass_offset = mu_g;
    cfg.z_range_cm = {1.0, 4.0};
    return zero_params(cfg);
}

inline double constant_model_sigma(const ModelParams& m) {
    return m.config.sigma_floor + m.config.mass_scale * std::log(2.0);
}

// iid heights in [-amp, amp] mm on a side x side patch.
inline PatchObservation random_patch(Rng& rng, double depth_cm, int side = kPatchSide, double amp = 20.0) {
    std::uniform_real_distribution<double> h(-amp, amp);
    PatchObservation p;
    p.side = side;
    p.heights.resize(static_cast<std::size_t>(side) * side);
    for (double& v : p.heights) v = h(rng);
    p.insertion_depth_cm = depth_cm;
    return p;
}

// Small but complete architecture: conv trunk, two dense layers, K = 3.
inline ModelConfig small_config(std::uint64_t seed = 1) {
    ModelConfig c;
    c.components = 3;
    c.conv_channels = 2;
    c.hidden_sizes = {6, 4};
    c.mass_offset = 20.0;
    c.mass_scale = 5.0;
    c.seed = seed;
    return c;
}

inline std::vector<Sample> random_batch(Rng& rng, std::size_t n) {
    std::uniform_real_distribution<double> z(1.0, 4.0), m(5.0, 35.0);
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double depth = z(rng);
        out.push_back({random_patch(rng, depth), m(rng), Split::train});
    }
    return out;
}

struct GradCheck {
    double worst_rel = 0.0;
    std::size_t checked = 0;
    std::size_t failed = 0;
};

// Central differences on `coords` with h = 1e-4 * max(1, |theta_i|). A coordinate
// passes when |g - fd| <= tol * max(|g|, |fd|) + abs_floor.
inline GradCheck check_gradient(ModelParams params, std::span<const Sample> batch, const std::vector<std::size_t>& coords,
                                double tol = 1e-3, double abs_floor = 1e-8) {
    const std::vector<double> g = nll_grad(params, batch);
    GradCheck res;
    for (std::size_t i : coords) {
        const double t0 = params.theta[i];
        const double h = 1e-4 * std::max(1.0, std::abs(t0));
        params.theta[i] = t0 + h;
        const double up = nll_loss(params, batch);
        params.theta[i] = t0 - h;
        const double down = nll_loss(params, batch);
        params.theta[i] = t0;
        const double fd = (up - down) / (2.0 * h);
        const double scale = std::max(std::abs(g[i]), std::abs(fd));
        const double err = std::abs(g[i] - fd);
        if (scale > 0.0) res.worst_rel = std::max(res.worst_rel, err > abs_floor ? err / scale : 0.0);
        ++res.checked;
        if (err > tol * scale + abs_floor) ++res.failed;
    }
    return res;
}

// Single-component, fixed-sigma linear model (no conv, no hidden layers) over a
// 2x2 pooled grid plus depth.
inline ModelConfig linear_config() {
    ModelConfig c;
    c.components = 1;
    c.fixed_sigma = 1.0;
    c.input_side = 20;
    c.feature_downsample = 10;
    c.conv_channels = 0;
    c.hidden_sizes = {};
    c.augment = false;
    c.learning_rate = 0.02;
    c.lr_final_fraction = 0.001;
    c.epochs = 3000;
    c.seed = 3;
    return c;
}

// Noiseless masses, linear in the pooled features and depth.
inline Dataset linear_dataset(std::uint64_t seed, std::size_t n = 60) {
    Rng rng = make_rng(seed, {0});
    const ModelConfig cfg = linear_config();
    std::uniform_real_distribution<double> z(1.0, 4.0), w(-20.0, 20.0);
    std::vector<double> weights(4);
    for (double& v : weights) v = w(rng);
    Dataset ds;
    for (std::size_t i = 0; i < n; ++i) {
        PatchObservation p = random_patch(rng, z(rng));
        const std::vector<double> x = detail::pooled_input(cfg, p);
        double m = 18.0 + 3.0 * p.insertion_depth_cm;
        for (std::size_t k = 0; k < x.size(); ++k) m += weights[k] * x[k];
        ds.rows.push_back({std::move(p), m, i % 4 == 3 ? Split::eval : Split::train});
    }
    return ds;
}

}  // namespace entpick::testing
