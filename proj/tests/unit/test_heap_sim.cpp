#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "entpick/heap_sim.hpp"
#include "fixtures.hpp"

using namespace entpick;
using entpick::testing::flat_config;

namespace {

struct Moments {
    double mean = 0.0;
    double se = 0.0;
};

Moments moments(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

bool on_tenth(double g) { return std::abs(g * 10.0 - std::round(g * 10.0)) < 1e-6; }

}  // namespace

TEST(InitHeap, FlatConfigGivesUniformHeight) {
    const HeapState heap = init_heap(flat_config(), 1);
    EXPECT_EQ(heap.nx(), 424);
    EXPECT_EQ(heap.ny(), 308);
    for (double h : heap.height_mm.data()) ASSERT_DOUBLE_EQ(h, 50.0);
}

TEST(InitHeap, FlatHeapMassByHand) {
    const HeapState heap = init_heap(flat_config(), 1);
    EXPECT_NEAR(total_mass(heap), 0.08 * 42.4 * 30.8 * 5.0, 1e-9);
}

TEST(InitHeap, EmptyHeapWeighsNothing) {
    const HeapState heap = init_heap(flat_config(0.0), 3);
    EXPECT_EQ(total_mass(heap), 0.0);
}

TEST(InitHeap, SameSeedSameHeap) {
    const SimConfig cfg;
    EXPECT_TRUE(init_heap(cfg, 42) == init_heap(cfg, 42));
    EXPECT_FALSE(init_heap(cfg, 42) == init_heap(cfg, 43));
}

TEST(InitHeap, FieldsWithinRanges) {
    const SimConfig cfg;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const HeapState heap = init_heap(cfg, seed);
        for (double h : heap.height_mm.data()) ASSERT_TRUE(h >= 0.0 && h <= 160.0);
        for (double l : heap.entanglement.data()) ASSERT_TRUE(l >= 0.0 && l <= 1.0);
        for (double r : heap.density.data()) ASSERT_GT(r, 0.0);
        const double m = total_mass(heap);
        EXPECT_TRUE(std::isfinite(m) && m > 0.0);
    }
}

TEST(InitHeap, RejectsBadDimensionsAndDensities) {
    SimConfig c;
    c.tray.width_mm = -1.0;
    EXPECT_THROW(init_heap(c, 1), std::invalid_argument);
    SimConfig d;
    d.rho_range = {0.0, 0.5};
    EXPECT_THROW(init_heap(d, 1), std::invalid_argument);
}

TEST(SimConfigJson, RoundTripAndUnknownKeys) {
    SimConfig c;
    c.kappa = 1.25;
    c.pregrasp.beta = 0.5;
    c.scale.lag = 2;
    const SimConfig back = sim_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    auto j = to_json(c);
    j["kapa"] = 1.0;
    EXPECT_THROW(sim_config_from_json(j), std::invalid_argument);
}

TEST(SimConfigJson, ShippedDefaultsMatchCode) {
    std::ifstream in(std::string(ENTPICK_SOURCE_DIR) + "/configs/sim_default.json");
    ASSERT_TRUE(in.good());
    EXPECT_EQ(nlohmann::json::parse(in), to_json(SimConfig{}));
}

TEST(MedianNormalize, ToyHeights) {
    const std::vector<double> h{5.0, 7.0, 9.0};
    double med = 0.0;
    const auto rel = median_normalize(h, &med);
    EXPECT_EQ(rel, (std::vector<double>{-2.0, 0.0, 2.0}));
    EXPECT_DOUBLE_EQ(med, 7.0);
}

TEST(MedianNormalize, EvenCountUsesMidpoint) {
    const std::vector<double> h{1.0, 2.0, 3.0, 10.0};
    double med = 0.0;
    const auto rel = median_normalize(h, &med);
    EXPECT_DOUBLE_EQ(med, 2.5);
    EXPECT_DOUBLE_EQ(rel[3], 7.5);
}

TEST(ObservePatch, FlatHeapIsAllZero) {
    const HeapState heap = init_heap(flat_config(), 1);
    const PatchObservation obs = observe_patch(heap, 200, 150);
    EXPECT_EQ(obs.side, kPatchSide);
    EXPECT_EQ(obs.heights.size(), static_cast<std::size_t>(kPatchSide * kPatchSide));
    for (double v : obs.heights) ASSERT_EQ(v, 0.0);
    EXPECT_DOUBLE_EQ(obs.surface_mm, 50.0);
    EXPECT_EQ(obs.insertion_depth_cm, 0.0);
}

TEST(ObservePatch, MedianIsZeroOnSeededHeaps) {
    const SimConfig cfg;
    for (std::uint64_t seed : {5u, 6u}) {
        const HeapState heap = init_heap(cfg, seed);
        for (auto [x, y] : {std::pair{80, 80}, std::pair{212, 154}, std::pair{343, 227}}) {
            PatchObservation obs = observe_patch(heap, x, y);
            std::vector<double> v = obs.heights;
            std::sort(v.begin(), v.end());
            const double med = 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
            EXPECT_LE(std::abs(med), kHeightQuantumMm);
        }
    }
}

TEST(ObservePatch, OutOfBoundsCentreThrows) {
    const HeapState heap = init_heap(SimConfig{}, 1);
    EXPECT_THROW(observe_patch(heap, 79, 150), std::out_of_range);
    EXPECT_THROW(observe_patch(heap, 200, 229), std::out_of_range);
    EXPECT_NO_THROW(observe_patch(heap, 80, 80));
}

TEST(ExecuteGrasp, BaseMassByHand) {
    SimConfig cfg = flat_config(50.0, 0.1);
    cfg.lambda_range = {0.0, 0.0};
    HeapState heap = init_heap(cfg, 1);
    Rng rng = make_rng(1);
    const GraspOutcome g = execute_grasp(heap, cfg, 212, 154, 2.0, rng);
    EXPECT_NEAR(g.base_mass, 1.8, 1e-9);
    EXPECT_EQ(g.entangled_extra, 0.0);
    EXPECT_TRUE(g.clump_masses.empty());
    EXPECT_NEAR(g.grasped_mass, 1.8, 1e-9);
}

TEST(ExecuteGrasp, ZeroKappaNoExtra) {
    SimConfig cfg;
    cfg.kappa = 0.0;
    HeapState heap = init_heap(cfg, 4);
    Rng rng = make_rng(4);
    for (int i = 0; i < 20; ++i) {
        const GraspOutcome g = execute_grasp(heap, cfg, 100 + 10 * i, 150, 3.0, rng);
        ASSERT_EQ(g.entangled_extra, 0.0);
        ASSERT_EQ(g.grasped_mass, g.base_mass);
    }
}

TEST(ExecuteGrasp, OutcomeInvariantsAndConservation) {
    const SimConfig cfg;
    HeapState heap = init_heap(cfg, 9);
    Rng rng = make_rng(9, {1});
    std::uniform_int_distribution<int> ux(80, 344), uy(80, 228);
    for (int i = 0; i < 60; ++i) {
        const double before = total_mass(heap);
        const double z = 2.0 + (i % 3);
        const GraspOutcome g = execute_grasp(heap, cfg, ux(rng), uy(rng), z, rng);
        const double extra = std::accumulate(g.clump_masses.begin(), g.clump_masses.end(), 0.0);
        ASSERT_NEAR(g.entangled_extra, extra, 1e-12);
        ASSERT_GE(g.entangled_extra, 0.0);
        ASSERT_NEAR(g.grasped_mass, g.base_mass + g.entangled_extra, 1e-12);
        ASSERT_NEAR(total_mass(heap) + g.grasped_mass, before, 1e-9);
        for (double h : heap.height_mm.data()) ASSERT_TRUE(h >= 0.0 && h <= 160.0);
    }
}

TEST(ExecuteGrasp, ReachErrors) {
    const SimConfig cfg;
    HeapState heap = init_heap(cfg, 2);
    Rng rng = make_rng(2);
    EXPECT_THROW(execute_grasp(heap, cfg, 5, 150, 2.0, rng), std::out_of_range);
    EXPECT_THROW(execute_grasp(heap, cfg, 212, 154, 12.0, rng), std::invalid_argument);
    EXPECT_THROW(execute_grasp(heap, cfg, 212, 154, 0.0, rng), std::invalid_argument);
}

TEST(ExecuteGrasp, MonteCarloMeanMatchesClosedForm) {
    // Wide reach and a deep heap so clumps never exhaust the ring around the fingers.
    SimConfig cfg = flat_config(120.0, 0.1);
    cfg.tray = {240.0, 240.0, 160.0};
    cfg.clump_reach_mm = 40.0;
    cfg.lambda_range = {0.5, 0.5};
    cfg.relax.sigma_mm = 0.0;
    const HeapState fresh = init_heap(cfg, 3);
    Rng rng = make_rng(3, {7});
    const int n = 10000;
    std::vector<double> masses;
    masses.reserve(n);
    double base = 0.0;
    for (int i = 0; i < n; ++i) {
        HeapState heap = fresh;
        const GraspOutcome g = execute_grasp(heap, cfg, 120, 120, 3.0, rng);
        base = g.base_mass;
        masses.push_back(g.grasped_mass);
    }
    const auto& ln = cfg.clump_lognormal;
    const double clump_mean = std::exp(ln.mu + 0.5 * ln.sigma * ln.sigma);
    const double analytic = base + cfg.kappa * 0.5 * clump_mean;
    const Moments m = moments(masses);
    EXPECT_NEAR(base, 0.1 * 4.0 * 2.25 * 3.0, 1e-9);
    EXPECT_LT(std::abs(m.mean - analytic), 3.0 * m.se) << "mean " << m.mean << " analytic " << analytic;
}

TEST(ExecuteGrasp, Deterministic) {
    const SimConfig cfg;
    HeapState a = init_heap(cfg, 11), b = init_heap(cfg, 11);
    Rng ra = make_rng(11, {2}), rb = make_rng(11, {2});
    for (int i = 0; i < 5; ++i) {
        const GraspOutcome ga = execute_grasp(a, cfg, 150 + 20 * i, 140, 3.0, ra);
        const GraspOutcome gb = execute_grasp(b, cfg, 150 + 20 * i, 140, 3.0, rb);
        ASSERT_EQ(ga.grasped_mass, gb.grasped_mass);
    }
    EXPECT_TRUE(a == b);
}

TEST(Pregrasp, ScalesEntanglementInsideRadiusOnly) {
    SimConfig cfg = flat_config();
    cfg.lambda_range = {0.8, 0.8};
    cfg.pregrasp.beta = 0.5;
    HeapState heap = init_heap(cfg, 1);
    const int x = 212, y = 154;
    apply_pregrasp(heap, cfg, x, y, 2.0);
    const double r = cfg.pregrasp.radius_mm;
    for (int j = 0; j < heap.ny(); j += 3)
        for (int i = 0; i < heap.nx(); i += 3) {
            const double dx = i + 0.5 - (x + 0.5), dy = j + 0.5 - (y + 0.5);
            const double want = dx * dx + dy * dy <= r * r ? 0.4 : 0.8;
            ASSERT_NEAR(heap.entanglement(i, j), want, 1e-12) << i << "," << j;
        }
    apply_pregrasp(heap, cfg, x, y, 2.0);
    EXPECT_NEAR(heap.entanglement(x, y), 0.2, 1e-12);
    EXPECT_NEAR(heap.entanglement(x + 100, y), 0.8, 1e-12);
}

TEST(Pregrasp, PreservesMassAndFluffs) {
    const SimConfig cfg;
    HeapState heap = init_heap(cfg, 8);
    const HeapState before = heap;
    const double m0 = total_mass(heap);
    apply_pregrasp(heap, cfg, 200, 150, 3.0);
    EXPECT_NEAR(total_mass(heap), m0, 1e-9);
    EXPECT_GT(heap.height_mm(200, 150), before.height_mm(200, 150));
    for (std::size_t k = 0; k < heap.entanglement.size(); ++k)
        ASSERT_LE(heap.entanglement.data()[k], before.entanglement.data()[k]);
}

TEST(Pregrasp, ReachErrors) {
    const SimConfig cfg;
    HeapState heap = init_heap(cfg, 2);
    EXPECT_THROW(apply_pregrasp(heap, cfg, 3, 3, 2.0), std::out_of_range);
    EXPECT_THROW(apply_pregrasp(heap, cfg, 212, 154, 15.0), std::invalid_argument);
}

TEST(Release, ReturnsMassToHeap) {
    const SimConfig cfg;
    HeapState heap = init_heap(cfg, 5);
    Rng rng = make_rng(5);
    const double m0 = total_mass(heap);
    const GraspOutcome g = execute_grasp(heap, cfg, 212, 154, 3.0, rng);
    release_to_heap(heap, cfg, 212, 154, g.grasped_mass);
    EXPECT_NEAR(total_mass(heap), m0, 1e-9);
    EXPECT_THROW(release_to_heap(heap, cfg, 212, 154, -1.0), std::invalid_argument);
}

TEST(Postgrasp, EmptyLoadDropsNothing) {
    const PostgraspConfig cfg;
    GripperLoad load;
    load.clump_masses = {0.0};
    Rng rng = make_rng(1);
    EXPECT_EQ(postgrasp_step(load, cfg.speed.v_max, cfg, rng), 0.0);
    EXPECT_EQ(load.remaining_mass(), 0.0);
}

TEST(Postgrasp, VanishingScaleDropsAlmostNothing) {
    PostgraspConfig cfg;
    cfg.gamma_scale = 1e-12;
    cfg.hang_drop_prob = 0.0;
    GripperLoad load;
    load.clump_masses = {30.0};
    Rng rng = make_rng(2);
    double total = 0.0;
    for (int i = 0; i < 100; ++i) total += postgrasp_step(load, cfg.speed.v_max, cfg, rng);
    EXPECT_LT(total, 1e-8);
}

TEST(Postgrasp, SpinedMeanMatchesGamma) {
    PostgraspConfig cfg;
    cfg.gamma_shape = 2.0;
    cfg.gamma_scale = 0.5;
    cfg.hang_drop_prob = 0.0;
    GripperLoad load;
    load.clump_masses = {1e9};
    Rng rng = make_rng(3);
    std::vector<double> drops;
    for (int i = 0; i < 10000; ++i) drops.push_back(postgrasp_step(load, 1.0, cfg, rng));
    const Moments m = moments(drops);
    EXPECT_LT(std::abs(m.mean - 1.0), 3.0 * m.se) << m.mean;
}

TEST(Postgrasp, SpeedOutsideRangeThrows) {
    const PostgraspConfig cfg;
    GripperLoad load;
    load.clump_masses = {10.0};
    Rng rng = make_rng(4);
    EXPECT_THROW(postgrasp_step(load, cfg.speed.v_min * 0.5, cfg, rng), std::invalid_argument);
    EXPECT_THROW(postgrasp_step(load, cfg.speed.v_max * 1.5, cfg, rng), std::invalid_argument);
}

TEST(Postgrasp, RemainingNeverIncreases) {
    const PostgraspConfig cfg;
    for (bool spines : {true, false}) {
        GraspOutcome g;
        g.base_mass = 20.0;
        g.clump_masses = {3.0, 2.5};
        g.entangled_extra = 5.5;
        g.grasped_mass = 25.5;
        GripperLoad load = make_load(g, spines);
        EXPECT_NEAR(load.remaining_mass(), 25.5, 1e-12);
        Rng rng = make_rng(5, {spines ? 1u : 0u});
        double prev = load.remaining_mass();
        double dropped = 0.0;
        for (int i = 0; i < 400; ++i) {
            dropped += postgrasp_step(load, cfg.speed.v_max, cfg, rng);
            ASSERT_LE(load.remaining_mass(), prev + 1e-12);
            ASSERT_GE(load.remaining_mass(), 0.0);
            prev = load.remaining_mass();
        }
        EXPECT_NEAR(dropped + load.remaining_mass(), 25.5, 1e-9);
    }
}

TEST(Postgrasp, SpinedDropsBoundedByQuantile) {
    const PostgraspConfig cfg;
    const double q_max = spine_drop_quantile(cfg, cfg.speed.v_max, 0.99);
    GraspOutcome g;
    g.base_mass = 1e9;
    g.grasped_mass = 1e9;
    GripperLoad load = make_load(g, true);
    Rng rng = make_rng(6);
    int over = 0;
    for (int i = 0; i < 10000; ++i) over += postgrasp_step(load, cfg.speed.v_max, cfg, rng) > q_max ? 1 : 0;
    EXPECT_LT(over, 100);
}

TEST(Postgrasp, UnspinedDropsWholeClumps) {
    PostgraspConfig cfg;
    cfg.p_clump = 1.0;
    cfg.hang_drop_prob = 0.0;
    GraspOutcome g;
    g.base_mass = 12.0;
    g.clump_masses = {4.0};
    g.grasped_mass = 16.0;
    GripperLoad load = make_load(g, false);
    Rng rng = make_rng(7);
    const double d = postgrasp_step(load, cfg.speed.v_min, cfg, rng);
    EXPECT_TRUE(d == 12.0 || d == 4.0) << d;
}

TEST(Scale, QuantizesTrueMass) {
    ScaleConfig c;
    c.lag = 0;
    ScaleSensor s(c);
    s.deposit(12.34, 0.0);
    EXPECT_NEAR(s.read(1.0), 12.3, 1e-12);
    EXPECT_DOUBLE_EQ(quantize_mass(12.34, 0.1), 12.3);
}

TEST(Scale, NothingDiscardedReadsZero) {
    ScaleSensor s(ScaleConfig{});
    for (double t = 0.0; t < 3.0; t += 0.07) ASSERT_EQ(s.read(t), 0.0);
}

TEST(Scale, LagDelaysBySamples) {
    ScaleConfig c;
    c.lag = 2;
    c.transient_gain = 0.0;
    ScaleSensor s(c);
    s.deposit(5.0, 0.0);
    s.deposit(3.0, 0.3);
    EXPECT_EQ(s.read(0.1), 0.0);
    EXPECT_NEAR(s.read(0.2), 5.0, 1e-12);
    EXPECT_NEAR(s.read(0.4), 5.0, 1e-12);
    EXPECT_NEAR(s.read(0.5), 8.0, 1e-12);
}

TEST(Scale, TransientOvershootLastsOneSample) {
    ScaleConfig c;
    c.lag = 0;
    c.transient_gain = 0.5;
    ScaleSensor s(c);
    s.deposit(4.0, 0.05);
    EXPECT_NEAR(s.read(0.1), 6.0, 1e-12);
    EXPECT_NEAR(s.read(0.2), 4.0, 1e-12);
}

TEST(Scale, ReadingsOnGridAndNonNegative) {
    ScaleSensor s(ScaleConfig{});
    Rng rng = make_rng(8);
    std::uniform_real_distribution<double> u(0.0, 0.7);
    for (int k = 0; k < 300; ++k) {
        const double t = k / 30.0;
        s.deposit(u(rng), t);
        const double r = s.read(t);
        ASSERT_GE(r, 0.0);
        ASSERT_TRUE(on_tenth(r)) << r;
    }
    for (std::size_t i = 0; i < s.readings().size(); ++i) {
        EXPECT_NEAR(s.readings()[i].t_s, i / 10.0, 1e-12);
        EXPECT_TRUE(on_tenth(s.readings()[i].value_g));
    }
}
