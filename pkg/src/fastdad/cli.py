"""fastdad command-line interface.

Subcommands cover the pipeline end to end: fit the density model or teacher,
draw augmented samples, label them, distill students, run sample diagnostics,
and drive full benchmark experiments from a JSON config.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np


def _load_table(args, require_target: bool = False):
    from .tables import TaskKind, load_csv

    table = load_csv(args.data)
    if getattr(args, "target", None):
        task = TaskKind(args.task, getattr(args, "classes", 0) or 0)
        table = table.with_target(args.target, task)
    elif require_target:
        raise SystemExit("this command needs --target/--task")
    return table


def _add_target_args(p):
    p.add_argument("--target", help="target column name")
    p.add_argument("--task", choices=["regression", "binary", "multiclass"])
    p.add_argument("--classes", type=int, default=0, help="class count for multiclass")


def cmd_fit_density(args) -> int:
    from .density import ModelConfig, fit, save_density
    from .tables import SplitSpec, split_train_val

    table = _load_table(args)
    train, val = split_train_val(table, SplitSpec(args.val_fraction, seed=args.seed))
    overrides = {}
    if args.preset != "auto":
        overrides["size_preset"] = args.preset
    if args.epochs is not None:
        overrides["max_epochs"] = args.epochs
    config = ModelConfig(**overrides)
    model = fit(train.features(), val.features(), config, seed=args.seed,
                log_path=args.log, verbose=not args.quiet)
    save_density(model, args.out)
    print(f"density model written to {args.out}")
    return 0


def cmd_fit_teacher(args) -> int:
    from .learners import StackEnsembleConfig, evaluate, fit_teacher, save_learner
    from .tables import SplitSpec, split_train_val

    table = _load_table(args, require_target=True)
    train, val = split_train_val(table, SplitSpec(args.val_fraction, seed=args.seed))
    config = StackEnsembleConfig(folds=args.folds)
    teacher = fit_teacher(train, val, config, seed=args.seed)
    save_learner(teacher, args.out)
    print(f"teacher written to {args.out} (validation metric {evaluate(teacher, val):.4f})")
    return 0


def cmd_sample(args) -> int:
    from .density import load_density
    from .gibbs import GibbsConfig, generate
    from .tables import load_csv, save_table_csv

    model = load_density(args.model)
    data = load_csv(args.data)
    config = GibbsConfig(
        rounds=args.rounds,
        target_count=args.count if args.count else min(args.mult * data.n_rows, 10**6),
        seed=args.seed,
    )
    aug = generate(model, data, config)
    save_table_csv(aug.table, args.out)
    sidecar = args.out + ".provenance.json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "rounds": args.rounds,
                "seed": args.seed,
                "origin_rows": aug.origin_rows.tolist(),
                "chain_rounds": aug.rounds.tolist(),
            },
            fh,
        )
    print(f"{aug.n_rows} samples written to {args.out} (+ {sidecar})")
    return 0


def cmd_augment(args) -> int:
    from .strategies import MungeParams, munge
    from .tables import load_csv, save_table_csv

    if args.strategy == "munge":
        data = load_csv(args.data)
        aug = munge(data, MungeParams(args.p, args.s), args.mult, seed=args.seed)
        save_table_csv(aug.table, args.out)
        print(f"{aug.n_rows} MUNGE samples written to {args.out}")
        return 0
    if not args.model:
        raise SystemExit("--strategy gibbs needs --model <density checkpoint>")
    return cmd_sample(args)  # gibbs route shares the sample flags


def cmd_label(args) -> int:
    from .gibbs import AugmentedSet
    from .learners import load_learner
    from .strategies import hunge_labels, teacher_label
    from .tables import load_csv

    teacher = load_learner(args.teacher)
    data = load_csv(args.data)
    aug = AugmentedSet(data, np.arange(data.n_rows), np.zeros(data.n_rows, dtype=np.int64))
    task = teacher.task
    targets = hunge_labels(teacher, aug, task) if args.hard else teacher_label(teacher, aug, task)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump({"kind": targets.kind, "task": task.to_json(), "values": targets.values.tolist()}, fh)
    print(f"{targets.n_rows} targets written to {args.out}")
    return 0


def cmd_distill(args) -> int:
    from .bench import _sub_seed
    from .density import load_density
    from .gibbs import GibbsConfig, generate
    from .learners import evaluate, load_learner, make_student, save_learner, select_model
    from .strategies import MungeParams, assemble, hunge_labels, know_targets, munge, teacher_label
    from .tables import SplitSpec, split_train_val

    table = _load_table(args, require_target=True)
    task = table.schema.target.task
    train, val = split_train_val(table, SplitSpec(0.9, seed=args.seed))
    teacher = load_learner(args.teacher)
    m = min(args.mult * train.n_rows, 10**6)

    if args.strategy == "base":
        dset = assemble(train, None, None, task)
    elif args.strategy == "know":
        probs = teacher.predict(train.features())
        targets = know_targets(probs, train.target_values(), task) if task.is_classification else probs
        from .strategies import DistillSet

        dset = DistillSet(train.features(), targets, np.ones(train.n_rows, dtype=bool))
    elif args.strategy in ("munge", "hunge"):
        import math as _math

        aug = munge(train, MungeParams(args.p, args.s), max(1, _math.ceil(m / train.n_rows)), seed=args.seed)
        labels = (
            hunge_labels(teacher, aug, task)
            if args.strategy == "hunge" and task.is_classification
            else teacher_label(teacher, aug, task)
        )
        dset = assemble(train, aug, labels, task)
    elif args.strategy == "gib":
        model = load_density(args.model)
        aug = generate(model, train, GibbsConfig(args.rounds, m, seed=args.seed))
        labels = teacher_label(teacher, aug, task)
        dset = assemble(train, aug, labels, task)
    else:
        raise SystemExit(f"unknown strategy {args.strategy}")

    kinds = ["mlp", "forest", "gbm"] if args.student == "all" else [args.student]
    students = []
    for kind in kinds:
        student = make_student(kind, seed=_sub_seed(args.seed, kind))
        student.fit(dset.features.features(), dset.targets, task, real_mask=dset.real_mask)
        students.append((kind, student))
        print(f"{kind}: validation metric {evaluate(student, val):.4f}")
    chosen, idx = select_model([s for _, s in students], val, task)
    print(f"Selected: {students[idx][0]}")
    save_learner(chosen, args.out)
    print(f"Selected student written to {args.out}")
    return 0


def cmd_diagnose(args) -> int:
    from .density import load_density
    from .diagnostics import diagnostics_suite
    from .tables import SplitSpec, load_csv, split_train_val

    model = load_density(args.model)
    data = load_csv(args.data)
    rest, test_real = split_train_val(data, SplitSpec(0.8, seed=args.seed))
    train, val_real = split_train_val(rest, SplitSpec(0.8, seed=args.seed + 1))
    rounds = [int(r) for r in args.rounds.split(",")]
    report = diagnostics_suite(model, train, val_real, test_real, rounds, seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    for row in report["rows"]:
        print(
            f"rounds {row['rounds']:3d}  mmd {row['mmd']:.4f}  diffusion {row['diffusion']:.4f}  "
            f"fidelity |acc-0.5| {row['fidelity']:.4f}"
        )
    print(f"report written to {args.out}")
    return 0


def cmd_bench(args) -> int:
    from .bench import ExperimentConfig, emit_report, run_experiment

    with open(args.config, "r", encoding="utf-8") as fh:
        config = ExperimentConfig.from_json(json.load(fh))
    report = run_experiment(config)
    paths = emit_report(report, args.out)
    print(f"reports written to {paths['json']}, {paths['csv']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastdad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-density", help="train the pseudolikelihood density model on a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.9)
    p.add_argument("--preset", choices=["auto", "small", "large"], default="auto")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--log", default=None, help="optional JSON training log path")
    p.add_argument("--quiet", action="store_true")
    _add_target_args(p)
    p.set_defaults(func=cmd_fit_density)

    p = sub.add_parser("fit-teacher", help="train the stacked-ensemble teacher")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.9)
    p.add_argument("--folds", type=int, default=10)
    _add_target_args(p)
    p.set_defaults(func=cmd_fit_teacher)

    p = sub.add_parser("sample", help="draw Gibbs samples from a fitted density model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--mult", type=int, default=10)
    p.add_argument("--count", type=int, default=None, help="explicit sample count (overrides --mult)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("augment", help="augment a CSV with MUNGE or Gibbs samples")
    p.add_argument("--strategy", choices=["munge", "gibbs"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mult", type=int, default=10)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--p", type=float, default=0.25, help="MUNGE swap probability")
    p.add_argument("--s", type=float, default=1.0, help="MUNGE local variance")
    p.add_argument("--model", help="density checkpoint (gibbs strategy)")
    p.add_argument("--rounds", type=int, default=1)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("label", help="label augmented rows with a teacher checkpoint")
    p.add_argument("--teacher", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hard", action="store_true", help="hard argmax labels (HUNGE)")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("distill", help="distill a teacher into fast students")
    p.add_argument("--data", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--strategy", choices=["base", "know", "munge", "hunge", "gib"], required=True)
    p.add_argument("--student", choices=["mlp", "forest", "gbm", "all"], default="all")
    p.add_argument("--model", help="density checkpoint (gib strategy)")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--mult", type=int, default=10)
    p.add_argument("--p", type=float, default=0.25)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_target_args(p)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("diagnose", help="sample-quality metrics across Gibbs rounds")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--rounds", default="0,1,5,10")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bench", help="run a full experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
