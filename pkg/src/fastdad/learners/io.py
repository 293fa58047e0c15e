"""Learner checkpoints: one npz per learner with a JSON meta blob; trees are
serialized as node arrays (feature, threshold/category, children, leaf vector).
"""

from __future__ import annotations

import json

import numpy as np

from ..tables import TaskKind
from .forest import ForestConfig, RandomForestLearner
from .gbm import GBMConfig, GradientBoostingLearner
from .mlp import MLPConfig, MLPLearner
from .stack import StackEnsembleConfig, StackedTeacher
from .tree import RegressionTree

CHECKPOINT_VERSION = 1

_TREE_FIELDS = ("feature", "threshold", "is_cat", "left", "right", "value")


def _pack_tree(tree: RegressionTree, prefix: str, arrays: dict) -> None:
    for name, arr in tree.to_arrays().items():
        arrays[f"{prefix}{name}"] = arr


def _unpack_tree(prefix: str, arrays) -> RegressionTree:
    return RegressionTree.from_arrays({name: arrays[f"{prefix}{name}"] for name in _TREE_FIELDS})


def _pack_learner(learner, prefix: str, arrays: dict) -> dict:
    """Append the learner's tensors under `prefix`; return its JSON meta."""
    if isinstance(learner, RandomForestLearner):
        for t, tree in enumerate(learner.trees):
            _pack_tree(tree, f"{prefix}t{t}::", arrays)
        return {
            "type": "forest",
            "config": learner.config.__dict__,
            "task": learner.task.to_json(),
            "kinds": list(learner.kinds),
            "n_trees": len(learner.trees),
        }
    if isinstance(learner, GradientBoostingLearner):
        for r, round_trees in enumerate(learner.trees):
            for c, tree in enumerate(round_trees):
                _pack_tree(tree, f"{prefix}r{r}c{c}::", arrays)
        return {
            "type": "gbm",
            "config": learner.config.__dict__,
            "task": learner.task.to_json(),
            "kinds": list(learner.kinds),
            "n_rounds_fit": len(learner.trees),
            "n_outputs": len(learner.trees[0]) if learner.trees else 1,
        }
    if isinstance(learner, MLPLearner):
        for k, v in learner.params.items():
            arrays[f"{prefix}{k}"] = v
        arrays[f"{prefix}num_mean"] = learner.num_mean
        arrays[f"{prefix}num_std"] = learner.num_std
        cfg = dict(learner.config.__dict__)
        cfg["hidden"] = list(cfg["hidden"])
        return {
            "type": "mlp",
            "config": cfg,
            "task": learner.task.to_json(),
            "kinds": list(learner.kinds),
            "param_names": sorted(learner.params.keys()),
            "target_mean": learner.target_mean,
            "target_std": learner.target_std,
        }
    if isinstance(learner, StackedTeacher):
        children = []
        for name, child in zip(learner.base_names, learner.full_refits):
            children.append(_pack_learner(child, f"{prefix}{name}::", arrays))
        meta_meta = _pack_learner(learner.meta, f"{prefix}meta::", arrays)
        arrays[f"{prefix}blend"] = learner.blend_weights
        cfg = {
            "folds": learner.config.folds,
            "blend_on_validation": learner.config.blend_on_validation,
            "mlp": {**learner.config.mlp.__dict__, "hidden": list(learner.config.mlp.hidden)},
            "forest": learner.config.forest.__dict__,
            "gbm": learner.config.gbm.__dict__,
            "meta": learner.config.meta.__dict__,
        }
        return {
            "type": "stacked_teacher",
            "config": cfg,
            "task": learner.task.to_json(),
            "seed": learner.seed,
            "base_names": learner.base_names,
            "children": children,
            "meta_child": meta_meta,
        }
    raise TypeError(f"cannot checkpoint learner of type {type(learner).__name__}")


def _unpack_learner(meta: dict, prefix: str, arrays):
    task = TaskKind.from_json(meta["task"])
    if meta["type"] == "forest":
        learner = RandomForestLearner(ForestConfig(**meta["config"]))
        learner.task = task
        learner.kinds = tuple(meta["kinds"])
        learner.trees = [_unpack_tree(f"{prefix}t{t}::", arrays) for t in range(meta["n_trees"])]
        return learner
    if meta["type"] == "gbm":
        learner = GradientBoostingLearner(GBMConfig(**meta["config"]))
        learner.task = task
        learner.kinds = tuple(meta["kinds"])
        learner.trees = [
            [_unpack_tree(f"{prefix}r{r}c{c}::", arrays) for c in range(meta["n_outputs"])]
            for r in range(meta["n_rounds_fit"])
        ]
        return learner
    if meta["type"] == "mlp":
        cfg = dict(meta["config"])
        cfg["hidden"] = tuple(cfg["hidden"])
        learner = MLPLearner(MLPConfig(**cfg))
        learner.task = task
        learner.kinds = tuple(meta["kinds"])
        learner.params = {k: np.array(arrays[f"{prefix}{k}"]) for k in meta["param_names"]}
        learner.num_mean = np.array(arrays[f"{prefix}num_mean"])
        learner.num_std = np.array(arrays[f"{prefix}num_std"])
        learner.target_mean = meta.get("target_mean", 0.0)
        learner.target_std = meta.get("target_std", 1.0)
        return learner
    if meta["type"] == "stacked_teacher":
        cfg = meta["config"]
        config = StackEnsembleConfig(
            folds=cfg["folds"],
            mlp=MLPConfig(**{**cfg["mlp"], "hidden": tuple(cfg["mlp"]["hidden"])}),
            forest=ForestConfig(**cfg["forest"]),
            gbm=GBMConfig(**cfg["gbm"]),
            meta=GBMConfig(**cfg["meta"]),
            blend_on_validation=cfg["blend_on_validation"],
        )
        teacher = StackedTeacher(config, meta["seed"])
        teacher.task = task
        teacher.base_names = list(meta["base_names"])
        teacher.full_refits = [
            _unpack_learner(child, f"{prefix}{name}::", arrays)
            for name, child in zip(teacher.base_names, meta["children"])
        ]
        teacher.meta = _unpack_learner(meta["meta_child"], f"{prefix}meta::", arrays)
        teacher.blend_weights = np.array(arrays[f"{prefix}blend"])
        return teacher
    raise ValueError(f"unknown learner type {meta['type']!r} in checkpoint")


def save_learner(learner, path: str) -> None:
    arrays: dict[str, np.ndarray] = {}
    meta = _pack_learner(learner, "", arrays)
    meta["format_version"] = CHECKPOINT_VERSION
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_learner(path: str):
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version")
        arrays = {k: np.array(data[k]) for k in data.files if k != "meta"}
    return _unpack_learner(meta, "", arrays)
