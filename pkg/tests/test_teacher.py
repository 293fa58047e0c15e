import numpy as np
import pytest

from fastdad.datasets import checkerboard_classification, friedman_regression
from fastdad.learners import (
    ForestConfig,
    GBMConfig,
    MLPConfig,
    SoftTargets,
    StackEnsembleConfig,
    TaskKind,
    evaluate,
    fit_teacher,
    select_model,
)
from fastdad.learners.base import Learner
from fastdad.tables import SplitSpec, split_train_val

SMALL_STACK = StackEnsembleConfig(
    folds=5,
    mlp=MLPConfig(hidden=(32,), max_epochs=40, patience=10),
    forest=ForestConfig(n_trees=20),
    gbm=GBMConfig(n_rounds=40),
    meta=GBMConfig(n_rounds=40),
)


@pytest.fixture(scope="module")
def checker_split():
    table = checkerboard_classification(300, seed=0)
    return split_train_val(table, SplitSpec(0.9, seed=1))


@pytest.fixture(scope="module")
def checker_teacher(checker_split):
    train, val = checker_split
    return fit_teacher(train, val, SMALL_STACK, seed=5)


class TestTeacher:
    def test_validation_metric_at_least_best_base_learner(self, checker_split, checker_teacher):
        train, val = checker_split
        teacher_score = evaluate(checker_teacher, val)
        for base in checker_teacher.full_refits:
            assert teacher_score >= evaluate(base, val)

    def test_fits_noiseless_identity_regression(self):
        rng = np.random.default_rng(2)

        def identity_table(seed):
            r = np.random.default_rng(seed)
            x = r.normal(size=300)
            from fastdad.datasets import _labeled_table

            return _labeled_table(x[:, None], x.copy(), TaskKind.regression())

        table = identity_table(2)
        train, val = split_train_val(table, SplitSpec(0.9, seed=3))
        teacher = fit_teacher(train, val, SMALL_STACK, seed=1)
        assert evaluate(teacher, identity_table(9)) > 0.99

    def test_regression_on_friedman_beats_every_base(self):
        table = friedman_regression(300, seed=2, noise=0.0)
        train, val = split_train_val(table, SplitSpec(0.9, seed=3))
        teacher = fit_teacher(train, val, SMALL_STACK, seed=1)
        teacher_score = evaluate(teacher, val)
        for base in teacher.full_refits:
            assert teacher_score >= evaluate(base, val)

    def test_same_seed_same_blend_weights(self, checker_split, checker_teacher):
        train, val = checker_split
        again = fit_teacher(train, val, SMALL_STACK, seed=5)
        assert np.array_equal(again.blend_weights, checker_teacher.blend_weights)

    def test_too_few_rows_rejected(self, checker_split):
        train, val = checker_split
        tiny = train.take(np.arange(3))
        with pytest.raises(ValueError):
            fit_teacher(tiny, val, SMALL_STACK, seed=0)

    def test_multiclass_predictions_valid(self, checker_split, checker_teacher):
        _, val = checker_split
        preds = checker_teacher.predict(val.features())
        preds.validate(TaskKind.multiclass(4))


class _Fixed(Learner):
    """Constant-prediction stub for selection tests."""

    def __init__(self, values, n_params, task):
        self.values = np.asarray(values, dtype=float)
        self._n = n_params
        self.task = task

    def fit(self, features, targets, task, real_mask=None):
        return self

    def predict(self, features):
        return SoftTargets(self.values)

    def descriptor(self):
        return {"type": "fixed"}

    def n_parameters(self):
        return self._n


class TestSelectModel:
    def _val_table(self):
        return checkerboard_classification(40, seed=4)

    def test_singleton(self):
        val = self._val_table()
        task = val.schema.target.task
        y = val.target_values()
        onehot = np.zeros((len(y), 4))
        onehot[np.arange(len(y)), y] = 1.0
        c = _Fixed(onehot, 10, task)
        chosen, idx = select_model([c], val, task)
        assert chosen is c and idx == 0

    def test_higher_accuracy_wins(self):
        val = self._val_table()
        task = val.schema.target.task
        y = val.target_values()
        perfect = np.zeros((len(y), 4))
        perfect[np.arange(len(y)), y] = 1.0
        uniform = np.full((len(y), 4), 0.25)
        good = _Fixed(perfect, 10_000, task)
        bad = _Fixed(uniform, 1, task)
        chosen, idx = select_model([bad, good], val, task)
        assert chosen is good and idx == 1

    def test_exact_tie_prefers_fewer_parameters(self):
        val = self._val_table()
        task = val.schema.target.task
        y = val.target_values()
        onehot = np.zeros((len(y), 4))
        onehot[np.arange(len(y)), y] = 1.0
        big = _Fixed(onehot, 500, task)
        small = _Fixed(onehot.copy(), 5, task)
        chosen, _ = select_model([big, small], val, task)
        assert chosen is small

    def test_tie_with_equal_parameters_keeps_registration_order(self):
        val = self._val_table()
        task = val.schema.target.task
        y = val.target_values()
        onehot = np.zeros((len(y), 4))
        onehot[np.arange(len(y)), y] = 1.0
        first = _Fixed(onehot, 5, task)
        second = _Fixed(onehot.copy(), 5, task)
        chosen, idx = select_model([first, second], val, task)
        assert chosen is first and idx == 0

    def test_empty_candidates_rejected(self):
        with pytest.raises(ValueError):
            select_model([], self._val_table(), TaskKind.multiclass(4))
