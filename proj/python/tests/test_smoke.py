import math

import numpy as np
import pytest

import entpick


def flat(fill=50.0):
    cfg = entpick.default_sim_config()
    cfg["fill_mm"] = fill
    return cfg


def test_defaults_round_trip():
    sim = entpick.default_sim_config()
    assert sim["tray_mm"][:2] == [424.0, 308.0]
    heap = entpick.make_heap(sim, seed=3)
    assert (heap.nx, heap.ny) == (424, 308)
    assert heap == entpick.make_heap(sim, seed=3)
    assert heap.heights().shape == (308, 424)


def test_grasp_conserves_mass():
    heap = entpick.make_heap(seed=1)
    before = heap.total_mass()
    g = entpick.execute_grasp(heap, 200, 150, 3.0, seed=5)
    assert g["grasped_g"] > 0
    assert math.isclose(before - heap.total_mass(), g["grasped_g"], abs_tol=1e-9)
    with pytest.raises(IndexError):
        entpick.execute_grasp(heap, 2, 2, 3.0, seed=5)


def test_patch_and_forward():
    heap = entpick.make_heap(seed=2)
    patch, surface = heap.observe_patch(200, 150)
    assert patch.shape == (160, 160)
    assert surface > 0
    assert np.median(patch) == pytest.approx(0.0, abs=0.1)
    model = entpick.make_model({"K": 3, "mass_offset": 20.0, "mass_scale": 4.0})
    pi, mu, sigma = model.forward(patch, 2.5)
    assert sum(pi) == pytest.approx(1.0, abs=1e-12)
    assert min(sigma) >= entpick.model_config(model)["sigma_floor"]
    with pytest.raises(ValueError):
        model.forward(np.zeros((100, 100)), 2.0)


def test_gradient_matches_finite_difference():
    rng = np.random.default_rng(0)
    model = entpick.make_model({"K": 2, "conv_channels": 0, "hidden_sizes": [4], "mass_offset": 20.0, "mass_scale": 5.0})
    patches = [rng.uniform(-10, 10, (160, 160)) for _ in range(2)]
    depths, masses = [2.0, 3.5], [18.0, 26.0]
    g = model.nll_grad(patches, depths, masses)
    theta = model.theta
    for i in range(0, len(theta), 7):
        h = 1e-4 * max(1.0, abs(theta[i]))
        up = list(theta)
        up[i] += h
        down = list(theta)
        down[i] -= h
        model.theta = up
        lu = model.nll(patches, depths, masses)
        model.theta = down
        ld = model.nll(patches, depths, masses)
        fd = (lu - ld) / (2 * h)
        assert abs(g[i] - fd) <= 1e-3 * max(abs(g[i]), abs(fd)) + 1e-8
    model.theta = theta


def test_selection_rule():
    assert entpick.is_feasible(23.0, 0.5, 22.0, 0.0)
    assert not entpick.is_feasible(21.9, 0.5, 22.0, 0.0)
    assert not entpick.is_feasible(0.0, math.inf, 5.0, 1.0)
    model = entpick.make_model({"K": 1, "conv_channels": 0, "hidden_sizes": [4], "mass_offset": 20.0}, zeros=True)
    heap = entpick.make_heap(flat(30.0), seed=1)
    rep = entpick.select_grasp(model, heap, target_g=15.0, stride_px=60)
    assert rep["winner"]["z_cm"] == 2.0
    assert any(c["sigma_g"] is None for c in rep["candidates"])
    assert entpick.select_grasp(model, heap, target_g=50.0, stride_px=60)["winner"] is None


def test_collect_train_episode(tmp_path):
    data = tmp_path / "d.jsonl"
    assert entpick.collect(data, n=24, seed=3) == 24
    model, best, log = entpick.train(data, {"K": 2, "conv_channels": 0, "hidden_sizes": [6], "epochs": 3})
    assert len(log) == 4 and 0 <= best <= 3
    heap = entpick.make_heap(seed=9)
    r = entpick.run_episode(model, heap, target_g=12.0, alpha=0.0, seed=1)
    assert r["status"] in {"placed", "failed_to_grasp", "infeasible"}
    assert r["heap_loss_g"] == pytest.approx(r["final_g"] + r["discarded_g"], abs=1e-9)


def test_experiment_and_statistics():
    assert "TABLE3" in entpick.preset_names()
    rep = entpick.run_experiment("TABLE3", episodes=30, seed=5)
    assert len(rep["cells"]) == 8
    assert all(0.0 <= c["mean_pct"] <= 100.0 for c in rep["cells"])
    with pytest.raises(ValueError):
        entpick.run_experiment("TABLE9")
    mean, std = entpick.bootstrap([1] * 88 + [0] * 12, 10000, 1)
    assert abs(mean - 88.0) < 0.5 and abs(std - 3.25) < 0.5
    assert entpick.percentile([15, 20, 35, 40, 50], 30) == 20
    assert entpick.controller_speed(27.0, 22.0, 30.0) == pytest.approx(0.6)
    _, counts, modes = entpick.histogram_modes([10.0] * 20 + [30.0] * 20, 2.0, 1, 0.1)
    assert len(modes) == 2
