import numpy as np
import pytest

from fastdad.datasets import checkerboard_classification, features_table
from fastdad.gibbs import AugmentedSet
from fastdad.learners import SoftTargets, TaskKind, brier_loss, encode_targets
from fastdad.learners.base import Learner
from fastdad.strategies import (
    DistillSet,
    MungeParams,
    assemble,
    hunge_labels,
    know_targets,
    munge,
    teacher_label,
)
from fastdad.strategies import _nearest_neighbors
from fastdad.tables import ColumnKind, Schema, Table


class _FixedTeacher(Learner):
    def __init__(self, values, task):
        self.values = np.asarray(values, dtype=float)
        self.task = task

    def fit(self, features, targets, task, real_mask=None):
        return self

    def predict(self, features):
        return SoftTargets(self.values[: features.n_rows if hasattr(features, "n_rows") else len(self.values)])

    def descriptor(self):
        return {"type": "fixed"}

    def n_parameters(self):
        return 0


def _aug_from(table, rounds=1):
    n = table.n_rows
    return AugmentedSet(table, np.arange(n), np.full(n, rounds))


class TestMungeParams:
    def test_grid_is_exactly_the_documented_set(self):
        grid = MungeParams.grid()
        assert {g.p for g in grid} == {0.1, 0.25, 0.5, 0.75}
        assert {g.s for g in grid} == {0.5, 1.0, 5.0}
        assert len(grid) == 12

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            MungeParams(-0.1, 1.0)
        with pytest.raises(ValueError):
            MungeParams(0.5, 0.0)


class TestNearestNeighbors:
    def test_three_point_example(self):
        t = features_table(np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0]]))
        nn = _nearest_neighbors(t)
        assert nn[0] == 1 and nn[1] == 0 and nn[2] in (0, 1)

    def test_matches_brute_force_with_mixed_columns(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            n = int(rng.integers(2, 10))
            num = rng.normal(size=n)
            cat = rng.integers(0, 3, size=n)
            schema = Schema(
                (("num", ColumnKind(None)), ("cat", ColumnKind(("a", "b", "c")))), None
            )
            t = Table(schema, [num, cat])
            nn = _nearest_neighbors(t)
            mu, sd = num.mean(), num.std() if num.std() > 1e-12 else 1.0
            z = (num - mu) / sd
            for i in range(n):
                dists = [
                    (abs(z[i] - z[j]) + (cat[i] != cat[j]) if j != i else np.inf)
                    for j in range(n)
                ]
                assert nn[i] == int(np.argmin(dists))


class TestMunge:
    def test_p_zero_is_identity(self):
        rng = np.random.default_rng(1)
        t = features_table(rng.normal(size=(20, 3)))
        aug = munge(t, MungeParams(0.0, 1.0), multiplier=2, seed=0)
        assert aug.n_rows == 40
        for j in range(3):
            assert np.array_equal(aug.table.columns[j][:20], t.columns[j])
            assert np.array_equal(aug.table.columns[j][20:], t.columns[j])

    def test_degenerate_two_point_swap(self):
        t = features_table(np.array([[0.0], [10.0]]))
        aug = munge(t, MungeParams(1.0, 1e12), multiplier=1, seed=0)
        assert np.allclose(np.sort(aug.table.columns[0]), [0.0, 10.0], atol=1e-6)
        assert aug.table.columns[0][0] == pytest.approx(10.0, abs=1e-6)
        assert aug.table.columns[0][1] == pytest.approx(0.0, abs=1e-6)

    def test_categorical_attributes_swap_to_neighbor_value(self):
        schema = Schema(
            (("num", ColumnKind(None)), ("cat", ColumnKind(("a", "b")))), None
        )
        t = Table(schema, [np.array([0.0, 0.1]), np.array([0, 1])])
        aug = munge(t, MungeParams(1.0, 1.0), multiplier=1, seed=0)
        assert np.array_equal(aug.table.columns[1], np.array([1, 0]))

    def test_needs_two_rows(self):
        t = features_table(np.array([[1.0]]))
        with pytest.raises(ValueError):
            munge(t, MungeParams(0.5, 1.0), 1, 0)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        t = features_table(rng.normal(size=(15, 2)))
        a = munge(t, MungeParams(0.5, 1.0), 3, seed=9)
        b = munge(t, MungeParams(0.5, 1.0), 3, seed=9)
        for ca, cb in zip(a.table.columns, b.table.columns):
            assert np.array_equal(ca, cb)


class TestLabeling:
    def test_binary_teacher_probability_passes_through(self):
        task = TaskKind.binary()
        t = features_table(np.zeros((1, 2)))
        teacher = _FixedTeacher(np.array([0.73]), task)
        targets = teacher_label(teacher, _aug_from(t), task)
        assert targets.values[0] == 0.73

    def test_multiclass_targets_sum_to_one(self):
        task = TaskKind.multiclass(3)
        t = features_table(np.zeros((4, 2)))
        probs = np.array([[0.2, 0.5, 0.3]] * 4)
        targets = teacher_label(_FixedTeacher(probs, task), _aug_from(t), task)
        assert np.allclose(targets.values.sum(axis=1), 1.0, atol=1e-6)

    def test_hunge_argmax_and_tie_break(self):
        task = TaskKind.multiclass(3)
        t = features_table(np.zeros((2, 2)))
        probs = np.array([[0.2, 0.8, 0.0], [0.5, 0.5, 0.0]])
        hard = hunge_labels(_FixedTeacher(probs, task), _aug_from(t), task)
        assert np.array_equal(hard.values[0], [0.0, 1.0, 0.0])
        assert np.array_equal(hard.values[1], [1.0, 0.0, 0.0])  # tie -> lower index

    def test_hunge_binary_tie_goes_to_class_zero(self):
        task = TaskKind.binary()
        t = features_table(np.zeros((2, 2)))
        hard = hunge_labels(_FixedTeacher(np.array([0.5, 0.51]), task), _aug_from(t), task)
        assert np.array_equal(hard.values, [0.0, 1.0])

    def test_hunge_rejects_regression(self):
        t = features_table(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            hunge_labels(_FixedTeacher(np.zeros(2), TaskKind.regression()), _aug_from(t), TaskKind.regression())

    def test_hard_labels_lose_calibration(self):
        # Brier of hard labels vs the teacher's own probabilities is never
        # smaller than Brier of the soft labels themselves (which is 0)
        task = TaskKind.binary()
        t = features_table(np.zeros((3, 2)))
        probs = np.array([0.6, 0.9, 0.2])
        teacher = _FixedTeacher(probs, task)
        hard = hunge_labels(teacher, _aug_from(t), task).values
        soft = teacher_label(teacher, _aug_from(t), task).values
        brier_hard = np.mean([brier_loss(h, p) for h, p in zip(hard, probs)])
        brier_soft = np.mean([brier_loss(s, p) for s, p in zip(soft, probs)])
        assert brier_hard >= brier_soft


class TestKnowTargets:
    def test_identity_settings(self):
        task = TaskKind.multiclass(3)
        probs = SoftTargets(np.array([[0.2, 0.5, 0.3], [0.7, 0.2, 0.1]]))
        y = np.array([1, 0])
        out = know_targets(probs, y, task, temperature=1.0, hard_weight=0.0)
        assert np.allclose(out.values, probs.values)

    def test_high_temperature_approaches_uniform(self):
        task = TaskKind.multiclass(4)
        probs = SoftTargets(np.array([[0.97, 0.01, 0.01, 0.01]]))
        out = know_targets(probs, np.array([0]), task, temperature=1e9, hard_weight=0.0)
        assert np.allclose(out.values, 0.25, atol=1e-6)

    def test_hand_computed_tempering(self):
        task = TaskKind.binary()
        probs = SoftTargets(np.array([0.9]))
        out = know_targets(probs, np.array([1]), task, temperature=2.0, hard_weight=0.0)
        expected = np.sqrt(0.9) / (np.sqrt(0.9) + np.sqrt(0.1))
        assert out.values[0] == pytest.approx(expected, abs=1e-12)
        assert out.values[0] == pytest.approx(0.75, abs=0.01)

    def test_full_hard_weight_returns_one_hot(self):
        task = TaskKind.multiclass(3)
        probs = SoftTargets(np.array([[0.2, 0.5, 0.3]]))
        out = know_targets(probs, np.array([2]), task, temperature=2.0, hard_weight=1.0)
        assert np.array_equal(out.values, [[0.0, 0.0, 1.0]])

    def test_invalid_settings_rejected(self):
        task = TaskKind.binary()
        probs = SoftTargets(np.array([0.5]))
        with pytest.raises(ValueError):
            know_targets(probs, np.array([0]), task, temperature=0.0)
        with pytest.raises(ValueError):
            know_targets(probs, np.array([0]), task, hard_weight=1.5)


class TestAssemble:
    def test_empty_augmentation_is_the_labeled_training_set(self):
        table = checkerboard_classification(10, seed=0)
        dset = assemble(table, None, None, table.schema.target.task)
        assert dset.n_rows == 10 and dset.n_real == 10
        assert np.allclose(dset.targets.values.sum(axis=1), 1.0)

    def test_real_then_augmented_ordering(self):
        table = checkerboard_classification(2, seed=1)
        task = table.schema.target.task
        aug = _aug_from(table.features().take([0, 1, 1]))
        aug_targets = SoftTargets(np.full((3, 4), 0.25))
        dset = assemble(table, aug, aug_targets, task)
        assert dset.n_rows == 5
        assert list(dset.real_mask) == [True, True, False, False, False]

    def test_mixed_target_kinds_rejected(self):
        table = checkerboard_classification(4, seed=2)
        task = table.schema.target.task
        aug = _aug_from(table.features().take([0]))
        with pytest.raises(ValueError):
            assemble(table, aug, SoftTargets(np.array([0.5])), task)

    def test_all_target_rows_valid_distributions(self):
        table = checkerboard_classification(6, seed=3)
        task = table.schema.target.task
        aug = _aug_from(table.features().take([0, 3]))
        aug_targets = SoftTargets(np.array([[0.7, 0.1, 0.1, 0.1], [0.25, 0.25, 0.25, 0.25]]))
        dset = assemble(table, aug, aug_targets, task)
        dset.targets.validate(task)
