"""Python access to the entpick simulator, mass model and experiment harness.

Configs go in as dicts (missing keys take defaults) and reports come back as
dicts. Arrays are numpy, row-major, y first.
"""

import json as _json

from . import _core
from ._core import (
    DatasetError,
    Heap,
    Model,
    bootstrap,
    controller_speed,
    histogram_modes,
    is_feasible,
    mixture_moments,
    mixture_pdf,
    percentile,
    preset_names,
)

__all__ = [
    "DatasetError",
    "Heap",
    "Model",
    "bootstrap",
    "collect",
    "controller_speed",
    "default_model_config",
    "default_sim_config",
    "execute_grasp",
    "histogram_modes",
    "is_feasible",
    "make_heap",
    "make_model",
    "mixture_moments",
    "mixture_pdf",
    "percentile",
    "preset_names",
    "run_episode",
    "run_experiment",
    "select_grasp",
    "train",
]


def _dump(cfg):
    return "" if cfg is None else _json.dumps(cfg)


def default_sim_config():
    return _json.loads(_core.default_sim_config())


def default_model_config():
    return _json.loads(_core.default_model_config())


def make_heap(config=None, seed=0):
    return Heap(_dump(config), seed)


def make_model(config=None, zeros=False):
    return (Model.zeros if zeros else Model.init)(_dump(config))


def model_config(model):
    return _json.loads(model.config)


def execute_grasp(heap, x, y, z_cm, seed, config=None):
    return _core.execute_grasp(heap, _dump(config), x, y, z_cm, seed)


def collect(path, n=200, seed=7, depths_cm=None, config=None):
    return _core.collect(_dump(config), n, seed, list(depths_cm or []), str(path))


def train(dataset_path, config=None):
    """Returns (model, best_epoch, [(epoch, train_nll, eval_nll), ...])."""
    return _core.train(str(dataset_path), _dump(config))


def select_grasp(model, heap, target_g, alpha=1.0, stride_px=15, depths_cm=None):
    return _json.loads(_core.select_grasp(model, heap, target_g, alpha, stride_px, list(depths_cm or [])))


def run_episode(model, heap, target_g, alpha=1.0, seed=0, config=None):
    return _core.run_episode(model, heap, _dump(config), target_g, alpha, seed)


def run_experiment(preset, model=None, dataset=None, episodes=0, targets_g=None, seed=2024, workers=1, config=None):
    return _json.loads(
        _core.run_experiment(
            preset, _dump(config), model, str(dataset or ""), episodes, list(targets_g or []), seed, workers
        )
    )
