import numpy as np
import pytest

from fastdad.datasets import checkerboard_classification, friedman_regression
from fastdad.learners import (
    ForestConfig,
    GBMConfig,
    MLPConfig,
    StackEnsembleConfig,
    encode_targets,
    fit_teacher,
    load_learner,
    make_student,
    save_learner,
)
from fastdad.tables import SplitSpec, split_train_val


def _fit_student(kind, table):
    task = table.schema.target.task
    configs = {
        "mlp": MLPConfig(hidden=(8,), max_epochs=3, patience=3, seed=1),
        "forest": ForestConfig(n_trees=4, seed=1),
        "gbm": GBMConfig(n_rounds=6, seed=1),
    }
    student = make_student(kind, config=configs[kind])
    student.fit(table.features(), encode_targets(table.target_values(), task), task)
    return student


@pytest.mark.parametrize("kind", ["mlp", "forest", "gbm"])
@pytest.mark.parametrize("dataset", ["multiclass", "regression"])
def test_student_checkpoint_round_trip(tmp_path, kind, dataset):
    table = (
        checkerboard_classification(60, seed=0)
        if dataset == "multiclass"
        else friedman_regression(60, seed=0)
    )
    student = _fit_student(kind, table)
    path = tmp_path / "student.npz"
    save_learner(student, str(path))
    loaded = load_learner(str(path))
    probe = table.features()
    assert np.array_equal(student.predict(probe).values, loaded.predict(probe).values)
    assert loaded.task == student.task


def test_teacher_checkpoint_round_trip(tmp_path):
    pool = checkerboard_classification(80, seed=3)
    train, val = split_train_val(pool, SplitSpec(0.9, seed=0))
    config = StackEnsembleConfig(
        folds=3,
        mlp=MLPConfig(hidden=(8,), max_epochs=3, patience=3),
        forest=ForestConfig(n_trees=4),
        gbm=GBMConfig(n_rounds=6),
        meta=GBMConfig(n_rounds=6),
    )
    teacher = fit_teacher(train, val, config, seed=5)
    path = tmp_path / "teacher.npz"
    save_learner(teacher, str(path))
    loaded = load_learner(str(path))
    probe = val.features()
    assert np.array_equal(teacher.predict(probe).values, loaded.predict(probe).values)
    assert np.array_equal(teacher.blend_weights, loaded.blend_weights)
