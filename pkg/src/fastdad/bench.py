"""Experiment orchestration: end-to-end strategy comparisons, Selected-model
accounting, rank aggregation, latency measurement, and report emission.

The deterministic results live in report.json (byte-identical across runs of
the same config); wall-clock measurements (latency, timestamps) go into a
separate timing.json sidecar.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats as scipy_stats

from .datasets import BUNDLED_DATASETS
from .density import DensityModel, ModelConfig
from .density import fit as fit_density
from .gibbs import GibbsConfig, generate
from .learners import (
    Learner,
    StackEnsembleConfig,
    evaluate,
    fit_teacher,
    make_student,
    select_model,
)
from .strategies import (
    DistillSet,
    MungeParams,
    assemble,
    hunge_labels,
    know_targets,
    munge,
    teacher_label,
)
from .tables import SplitSpec, Table, TaskKind, load_csv, split_train_val

MAX_AUGMENTED_ROWS = 10**6

__all__ = [
    "DatasetSpec",
    "ExperimentConfig",
    "RunReport",
    "run_experiment",
    "measure_latency",
    "emit_report",
    "load_report",
]


def _sub_seed(*words) -> int:
    coded = [w if isinstance(w, int) else int.from_bytes(str(w).encode(), "little") % (2**32) for w in words]
    return int(np.random.SeedSequence(coded).generate_state(1)[0])


@dataclass(frozen=True)
class DatasetSpec:
    """Either a bundled generator (name + sizes) or CSV paths with a target."""

    name: Optional[str] = None
    n_train: int = 500
    n_test: int = 2000
    path: Optional[str] = None
    test_path: Optional[str] = None
    target: Optional[str] = None
    task: Optional[str] = None
    n_classes: int = 0
    test_fraction: float = 0.2
    data_seed: int = 0

    def __post_init__(self):
        if (self.name is None) == (self.path is None):
            raise ValueError("specify exactly one of a bundled dataset name or a CSV path")

    def task_kind(self) -> Optional[TaskKind]:
        if self.task is None:
            return None
        return TaskKind(self.task, self.n_classes)

    def load(self, seed: int) -> tuple[Table, Table]:
        """(train pool, test) for one pipeline seed. Bundled generators draw a
        fresh replicate per seed; CSV data is split once per seed when no
        dedicated test file exists."""
        if self.name is not None:
            gen = BUNDLED_DATASETS[self.name]
            train = gen(self.n_train, seed=_sub_seed(self.data_seed, seed, 0))
            test = gen(self.n_test, seed=_sub_seed(self.data_seed, seed, 1))
            return train, test
        table = load_csv(self.path)
        if self.target is None or self.task is None:
            raise ValueError("CSV datasets need a target column and task")
        table = table.with_target(self.target, self.task_kind())
        if self.test_path is not None:
            test = load_csv(self.test_path).with_target(self.target, self.task_kind())
            return table, test
        holdout = SplitSpec(1.0 - self.test_fraction, seed=_sub_seed(self.data_seed, seed, 2))
        train, test = split_train_val(table, holdout)
        return train, test

    def content_hash(self) -> str:
        h = hashlib.sha256()
        if self.path is not None:
            with open(self.path, "rb") as fh:
                h.update(fh.read())
            if self.test_path is not None:
                with open(self.test_path, "rb") as fh:
                    h.update(fh.read())
        h.update(json.dumps(self.__dict__, sort_keys=True, default=str).encode())
        return h.hexdigest()[:16]

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _parse_strategy(name: str) -> tuple[str, Optional[int]]:
    if name in ("BASE", "KNOW", "MUNGE", "HUNGE"):
        return name, None
    if name.startswith("GIB-"):
        rounds = int(name[4:])
        if rounds < 0:
            raise ValueError(f"bad Gibbs round count in {name!r}")
        return "GIB", rounds
    raise ValueError(f"unknown strategy {name!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    strategies: tuple[str, ...] = ("BASE", "GIB-1")
    students: tuple[str, ...] = ("mlp", "forest", "gbm")
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    multiplier: int = 10
    train_fraction: float = 0.9
    teacher: StackEnsembleConfig = field(default_factory=StackEnsembleConfig)
    density: ModelConfig = field(default_factory=ModelConfig)
    know_temperature: float = 2.0
    know_hard_weight: float = 0.25
    munge_grid_search: bool = True
    munge_p: float = 0.25
    munge_s: float = 1.0
    include_latency: bool = False
    latency_rows: int = 10_000
    latency_repetitions: int = 5

    def __post_init__(self):
        if not self.strategies or not self.students or not self.seeds:
            raise ValueError("strategies, students, and seeds must be non-empty")
        for s in self.strategies:
            _parse_strategy(s)
        for s in self.students:
            if s not in ("mlp", "forest", "gbm"):
                raise ValueError(f"unknown student type {s!r}")

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset.to_json(),
            "strategies": list(self.strategies),
            "students": list(self.students),
            "seeds": list(self.seeds),
            "multiplier": self.multiplier,
            "train_fraction": self.train_fraction,
            "teacher": _stack_to_json(self.teacher),
            "density": self.density.to_json(),
            "know_temperature": self.know_temperature,
            "know_hard_weight": self.know_hard_weight,
            "munge_grid_search": self.munge_grid_search,
            "munge_p": self.munge_p,
            "munge_s": self.munge_s,
            "include_latency": self.include_latency,
            "latency_rows": self.latency_rows,
            "latency_repetitions": self.latency_repetitions,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        from .learners import ForestConfig, GBMConfig, MLPConfig

        teacher = obj.get("teacher", {})
        stack = StackEnsembleConfig(
            folds=teacher.get("folds", 10),
            mlp=MLPConfig(**{**teacher.get("mlp", {}), "hidden": tuple(teacher.get("mlp", {}).get("hidden", (128, 128)))}),
            forest=ForestConfig(**teacher.get("forest", {})),
            gbm=GBMConfig(**teacher.get("gbm", {})),
            meta=GBMConfig(**teacher.get("meta", {})),
            blend_on_validation=teacher.get("blend_on_validation", True),
        )
        return cls(
            dataset=DatasetSpec(**obj["dataset"]),
            strategies=tuple(obj.get("strategies", ("BASE", "GIB-1"))),
            students=tuple(obj.get("students", ("mlp", "forest", "gbm"))),
            seeds=tuple(obj.get("seeds", (0, 1, 2, 3, 4))),
            multiplier=obj.get("multiplier", 10),
            train_fraction=obj.get("train_fraction", 0.9),
            teacher=stack,
            density=ModelConfig.from_json(obj["density"]) if "density" in obj else ModelConfig(),
            know_temperature=obj.get("know_temperature", 2.0),
            know_hard_weight=obj.get("know_hard_weight", 0.25),
            munge_grid_search=obj.get("munge_grid_search", True),
            munge_p=obj.get("munge_p", 0.25),
            munge_s=obj.get("munge_s", 1.0),
            include_latency=obj.get("include_latency", False),
            latency_rows=obj.get("latency_rows", 10_000),
            latency_repetitions=obj.get("latency_repetitions", 5),
        )


def _stack_to_json(cfg: StackEnsembleConfig) -> dict:
    return {
        "folds": cfg.folds,
        "mlp": {**cfg.mlp.__dict__, "hidden": list(cfg.mlp.hidden)},
        "forest": dict(cfg.forest.__dict__),
        "gbm": dict(cfg.gbm.__dict__),
        "meta": dict(cfg.meta.__dict__),
        "blend_on_validation": cfg.blend_on_validation,
    }


@dataclass
class RunReport:
    """Deterministic results payload plus a volatile timing payload."""

    payload: dict
    timing: dict = field(default_factory=dict)

    def __eq__(self, other):
        return isinstance(other, RunReport) and self.payload == other.payload

    def cell(self, strategy: str, student: str, seed: int) -> dict:
        return self.payload["cells"][f"{strategy}|{student}|{seed}"]

    def selected(self, strategy: str, seed: int) -> dict:
        return self.payload["selected"][f"{strategy}|{seed}"]


# ---------------------------------------------------------------------------
# Pipeline


def _distill_sets_for_strategy(
    strategy: str,
    rounds: Optional[int],
    *,
    config: ExperimentConfig,
    seed: int,
    train: Table,
    task: TaskKind,
    teacher: Learner,
    density_model: Optional[DensityModel],
    m: int,
) -> dict[str, object]:
    """Per-student distillation data. For most strategies every student shares
    one DistillSet; MUNGE/HUNGE grid search returns a per-student callable."""
    if strategy == "BASE":
        return {"shared": assemble(train, None, None, task)}
    if strategy == "KNOW":
        teacher_out = teacher.predict(train.features())
        if task.is_classification:
            targets = know_targets(
                teacher_out, train.target_values(), task,
                config.know_temperature, config.know_hard_weight,
            )
        else:
            w = config.know_hard_weight
            targets = type(teacher_out)(
                (1.0 - w) * teacher_out.values + w * train.target_values()
            )
        feats = train.features()
        return {"shared": DistillSet(feats, targets, np.ones(feats.n_rows, dtype=bool))}
    if strategy in ("MUNGE", "HUNGE"):
        hard = strategy == "HUNGE" and task.is_classification
        multiplier = max(1, math.ceil(m / train.n_rows))
        grid = MungeParams.grid() if config.munge_grid_search else [MungeParams(config.munge_p, config.munge_s)]
        cached = []
        for params in grid:
            aug = munge(train, params, multiplier, seed=_sub_seed(seed, strategy, params.p, params.s))
            if aug.n_rows > m:
                keep = np.sort(
                    np.random.default_rng([_sub_seed(seed, strategy, 77)]).choice(aug.n_rows, m, replace=False)
                )
                aug = type(aug)(aug.table.take(keep), aug.origin_rows[keep], aug.rounds[keep])
            labels = hunge_labels(teacher, aug, task) if hard else teacher_label(teacher, aug, task)
            cached.append((params, assemble(train, aug, labels, task)))
        return {"grid": cached}
    if strategy == "GIB":
        aug = generate(
            density_model, train,
            GibbsConfig(rounds=rounds, target_count=m, seed=_sub_seed(seed, "gibbs", rounds)),
        )
        labels = teacher_label(teacher, aug, task)
        return {"shared": assemble(train, aug, labels, task)}
    raise AssertionError(strategy)


def _fit_cell(
    student_kind: str,
    data: dict,
    *,
    val: Table,
    task: TaskKind,
    seed: int,
    strategy_name: str,
) -> tuple[Learner, dict]:
    """Fit one (strategy, student) cell; grid data selects by validation metric."""
    if "shared" in data:
        student = make_student(student_kind, seed=_sub_seed(seed, strategy_name, student_kind))
        student.fit(
            data["shared"].features.features(), data["shared"].targets, task,
            real_mask=data["shared"].real_mask,
        )
        return student, {}
    best = None
    for params, dset in data["grid"]:
        student = make_student(student_kind, seed=_sub_seed(seed, strategy_name, student_kind))
        student.fit(dset.features.features(), dset.targets, task, real_mask=dset.real_mask)
        score = evaluate(student, val)
        if best is None or score > best[0]:
            best = (score, student, params)
    return best[1], {"munge_p": best[2].p, "munge_s": best[2].s}


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Run every (strategy, student, seed) cell sequentially. FASTDAD_THREADS,
    when set, caps the BLAS thread pools used inside the cells."""
    thread_cap = os.environ.get("FASTDAD_THREADS")
    if thread_cap:
        try:
            from threadpoolctl import threadpool_limits
        except ImportError:  # pragma: no cover
            threadpool_limits = None
        if threadpool_limits is not None:
            with threadpool_limits(limits=max(1, int(thread_cap))):
                return _run_experiment_inner(config)
    return _run_experiment_inner(config)


def _run_experiment_inner(config: ExperimentConfig) -> RunReport:
    cells: dict[str, dict] = {}
    selected: dict[str, dict] = {}
    timing: dict[str, dict] = {}
    density_fits = 0

    needs_density = any(_parse_strategy(s)[0] == "GIB" for s in config.strategies)

    for seed in config.seeds:
        train_pool, test = config.dataset.load(seed)
        task = train_pool.schema.target.task
        train, val = split_train_val(train_pool, SplitSpec(config.train_fraction, seed=_sub_seed(seed, "split")))
        m = min(config.multiplier * train.n_rows, MAX_AUGMENTED_ROWS)

        teacher = fit_teacher(train, val, config.teacher, seed=_sub_seed(seed, "teacher"))
        density_model = None
        if needs_density:
            density_model = fit_density(train.features(), val.features(), config.density, seed=_sub_seed(seed, "density"))
            density_fits += 1

        for strategy_name in config.strategies:
            kind, rounds = _parse_strategy(strategy_name)
            try:
                if strategy_name == "BASE":
                    data = None
                else:
                    data = _distill_sets_for_strategy(
                        kind, rounds, config=config, seed=seed, train=train, task=task,
                        teacher=teacher, density_model=density_model, m=m,
                    )
            except Exception as exc:  # augmentation failure hits every cell of the strategy
                for student_kind in config.students:
                    cells[f"{strategy_name}|{student_kind}|{seed}"] = {"status": "failed", "error": str(exc)}
                selected[f"{strategy_name}|{seed}"] = {"status": "failed", "error": str(exc)}
                continue

            fitted: list[tuple[str, Learner]] = []
            for student_kind in config.students:
                key = f"{strategy_name}|{student_kind}|{seed}"
                try:
                    if strategy_name == "BASE":
                        idx = teacher.base_names.index(student_kind)
                        student = teacher.full_refits[idx]
                        extra = {}
                    else:
                        student, extra = _fit_cell(
                            student_kind, data, val=val, task=task, seed=seed,
                            strategy_name=strategy_name,
                        )
                    val_metric = evaluate(student, val)
                    test_metric = evaluate(student, test)
                    cell = {
                        "status": "ok",
                        "val_metric": val_metric,
                        "test_metric": test_metric,
                        "metric_pct": 100.0 * test_metric,
                        "n_parameters": student.n_parameters(),
                        **extra,
                    }
                    cells[key] = cell
                    fitted.append((student_kind, student))
                    if config.include_latency:
                        timing[key] = {
                            "rows_per_second": measure_latency(
                                student, test.features(), config.latency_repetitions,
                                max_rows=config.latency_rows,
                            )
                        }
                except Exception as exc:
                    cells[key] = {"status": "failed", "error": str(exc)}

            if fitted:
                chosen, idx = select_model([s for _, s in fitted], val, task)
                name = fitted[idx][0]
                sel_cell = cells[f"{strategy_name}|{name}|{seed}"]
                selected[f"{strategy_name}|{seed}"] = {
                    "status": "ok",
                    "student": name,
                    "val_metric": sel_cell["val_metric"],
                    "test_metric": sel_cell["test_metric"],
                    "metric_pct": sel_cell["metric_pct"],
                }
            else:
                selected[f"{strategy_name}|{seed}"] = {"status": "failed", "error": "no students fitted"}

        if config.include_latency:
            timing[f"TEACHER||{seed}"] = {
                "rows_per_second": measure_latency(
                    teacher, test.features(), config.latency_repetitions,
                    max_rows=config.latency_rows,
                )
            }

    payload = {
        "format_version": 1,
        "config": config.to_json(),
        "input_hash": config.dataset.content_hash(),
        "task": config.dataset.task or "bundled",
        "cells": cells,
        "selected": selected,
        "aggregates": _aggregate_cells(config, cells),
        "selected_aggregates": _aggregate_selected(config, selected),
        "ranks": _average_ranks(config, selected),
        "p_values_vs_base": _sign_test_vs_base(config, selected),
        "density_models_fit": density_fits,
    }
    report = RunReport(payload=payload, timing=timing)
    return report


def _mean_stderr(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    out = {"mean": float(arr.mean()), "n": len(arr)}
    out["stderr"] = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return out


def _aggregate_cells(config: ExperimentConfig, cells: dict) -> dict:
    agg = {}
    for strategy in config.strategies:
        for student in config.students:
            oks = [
                cells[f"{strategy}|{student}|{seed}"]
                for seed in config.seeds
                if cells.get(f"{strategy}|{student}|{seed}", {}).get("status") == "ok"
            ]
            key = f"{strategy}|{student}"
            if oks:
                agg[key] = {
                    "test": _mean_stderr([c["test_metric"] for c in oks]),
                    "val": _mean_stderr([c["val_metric"] for c in oks]),
                    "failed_seeds": len(config.seeds) - len(oks),
                }
            else:
                agg[key] = {"status": "failed", "failed_seeds": len(config.seeds)}
    return agg


def _aggregate_selected(config: ExperimentConfig, selected: dict) -> dict:
    agg = {}
    for strategy in config.strategies:
        oks = [
            selected[f"{strategy}|{seed}"]
            for seed in config.seeds
            if selected.get(f"{strategy}|{seed}", {}).get("status") == "ok"
        ]
        if oks:
            agg[strategy] = {
                "test": _mean_stderr([c["test_metric"] for c in oks]),
                "failed_seeds": len(config.seeds) - len(oks),
            }
        else:
            agg[strategy] = {"status": "failed", "failed_seeds": len(config.seeds)}
    return agg


def _average_ranks(config: ExperimentConfig, selected: dict) -> dict:
    """Rank 1 = best Selected test metric, ties averaged; aggregated over the
    seeds where every strategy produced a result."""
    per_seed_ranks = {s: [] for s in config.strategies}
    for seed in config.seeds:
        row = [selected.get(f"{s}|{seed}", {}) for s in config.strategies]
        if any(c.get("status") != "ok" for c in row):
            continue
        metrics = np.array([c["test_metric"] for c in row])
        ranks = scipy_stats.rankdata(-metrics, method="average")
        for s, r in zip(config.strategies, ranks):
            per_seed_ranks[s].append(float(r))
    return {
        s: (_mean_stderr(rs) if rs else {"status": "failed"})
        for s, rs in per_seed_ranks.items()
    }


def _sign_test_vs_base(config: ExperimentConfig, selected: dict) -> dict:
    """One-sided Wilcoxon signed-rank over per-seed Selected differences,
    testing strategy > BASE."""
    out = {}
    if "BASE" not in config.strategies:
        return out
    base = [selected.get(f"BASE|{seed}", {}) for seed in config.seeds]
    for strategy in config.strategies:
        if strategy == "BASE":
            continue
        other = [selected.get(f"{strategy}|{seed}", {}) for seed in config.seeds]
        pairs = [
            (o["test_metric"], b["test_metric"])
            for o, b in zip(other, base)
            if o.get("status") == "ok" and b.get("status") == "ok"
        ]
        if len(pairs) < 2:
            out[strategy] = None
            continue
        diffs = np.array([a - b for a, b in pairs])
        if np.all(diffs == 0):
            out[strategy] = 1.0
            continue
        try:
            res = scipy_stats.wilcoxon(diffs, alternative="greater")
            out[strategy] = float(res.pvalue)
        except ValueError:
            out[strategy] = None
    return out


# ---------------------------------------------------------------------------
# Latency


def measure_latency(model: Learner, rows: Table, repetitions: int = 5, max_rows: Optional[int] = None) -> float:
    """Median single-threaded predict throughput in rows/second. One warm-up
    pass precedes timing."""
    if repetitions < 3:
        raise ValueError("need at least 3 repetitions")
    feats = rows.features()
    if feats.n_rows == 0:
        raise ValueError("empty rows")
    if max_rows is not None and feats.n_rows > max_rows:
        feats = feats.take(np.arange(max_rows))
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - threadpoolctl ships with sklearn here
        import contextlib

        threadpool_limits = lambda *_a, **_k: contextlib.nullcontext()
    throughputs = []
    with threadpool_limits(limits=1):
        model.predict(feats)  # warm-up
        for _ in range(repetitions):
            start = time.perf_counter()
            model.predict(feats)
            elapsed = time.perf_counter() - start
            throughputs.append(feats.n_rows / max(elapsed, 1e-9))
    return float(np.median(throughputs))


# ---------------------------------------------------------------------------
# Report emission


def _stable_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False)


def emit_report(report: RunReport, out_dir: str) -> dict[str, str]:
    """Write report.json (deterministic), timing.json (volatile: latency and
    wall-clock), and the human CSV table. Returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "json": os.path.join(out_dir, "report.json"),
        "timing": os.path.join(out_dir, "timing.json"),
        "csv": os.path.join(out_dir, "report.csv"),
    }
    with open(paths["json"], "w", encoding="utf-8") as fh:
        fh.write(_stable_json(report.payload))
    with open(paths["timing"], "w", encoding="utf-8") as fh:
        fh.write(_stable_json({"generated_at": time.strftime("%Y-%m-%dT%H:%M:%S"), "timing": report.timing}))
    _write_csv(report, paths["csv"])
    return paths


def _write_csv(report: RunReport, path: str) -> None:
    config = report.payload["config"]
    agg = report.payload["aggregates"]
    sel = report.payload["selected_aggregates"]
    ranks = report.payload["ranks"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "student", "test_metric_pct", "stderr_pct", "avg_rank", "failed_seeds"])
        for strategy in config["strategies"]:
            for student in config["students"]:
                a = agg[f"{strategy}|{student}"]
                if "test" in a:
                    writer.writerow([
                        strategy, student,
                        f"{100 * a['test']['mean']:.2f}", f"{100 * a['test']['stderr']:.2f}",
                        "", a["failed_seeds"],
                    ])
                else:
                    writer.writerow([strategy, student, "FAILED", "", "", a["failed_seeds"]])
            s = sel.get(strategy, {})
            r = ranks.get(strategy, {})
            if "test" in s:
                writer.writerow([
                    strategy, "Selected",
                    f"{100 * s['test']['mean']:.2f}", f"{100 * s['test']['stderr']:.2f}",
                    f"{r['mean']:.3f}" if "mean" in r else "", s["failed_seeds"],
                ])
            else:
                writer.writerow([strategy, "Selected", "FAILED", "", "", s.get("failed_seeds", "")])


def load_report(out_dir: str) -> RunReport:
    with open(os.path.join(out_dir, "report.json"), "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    timing = {}
    timing_path = os.path.join(out_dir, "timing.json")
    if os.path.exists(timing_path):
        with open(timing_path, "r", encoding="utf-8") as fh:
            timing = json.load(fh).get("timing", {})
    return RunReport(payload=payload, timing=timing)
