import numpy as np
import pytest
from hypothesis import given, strategies as st

from fastdad.tables import (
    ColumnKind,
    Schema,
    SplitSpec,
    Table,
    TableError,
    TargetSpec,
    TaskKind,
    compute_stats,
    dequantize,
    destandardize,
    from_model_matrix,
    load_csv,
    requantize,
    split_train_val,
    standardize,
    table_from_json,
    table_to_json,
    to_model_matrix,
)


def write(tmp_path, text):
    p = tmp_path / "data.csv"
    p.write_text(text)
    return str(p)


class TestLoadCsv:
    def test_numeric_and_categorical_inference(self, tmp_path):
        t = load_csv(write(tmp_path, "a,b\n1.0,x\n2.0,y\n3.0,x\n"))
        assert not t.schema.kind_of(0).is_categorical
        kind_b = t.schema.kind_of(1)
        assert kind_b.is_categorical and kind_b.cardinality == 2
        assert list(t.columns[1]) == [0, 1, 0]  # first-appearance codes

    def test_one_bad_cell_makes_column_categorical(self, tmp_path):
        t = load_csv(write(tmp_path, "v\n1\n2\nnot-a-number\n"))
        assert t.schema.kind_of(0).is_categorical

    def test_header_only_is_an_error(self, tmp_path):
        with pytest.raises(TableError, match="empty table"):
            load_csv(write(tmp_path, "a,b\n"))

    def test_ragged_rows_rejected(self, tmp_path):
        with pytest.raises(TableError, match="row 3"):
            load_csv(write(tmp_path, "a,b\n1,2\n3\n"))

    def test_missing_cell_rejected(self, tmp_path):
        with pytest.raises(TableError, match="missing value"):
            load_csv(write(tmp_path, "a,b\n1,\n2,3\n"))


class TestSplit:
    def _table(self, n):
        schema = Schema((("x", ColumnKind(None)),), None)
        return Table(schema, [np.arange(n, dtype=float)])

    def test_ninety_ten(self):
        tr, va = split_train_val(self._table(10), SplitSpec(0.9, seed=3))
        assert tr.n_rows == 9 and va.n_rows == 1

    def test_same_seed_same_partition(self):
        t = self._table(40)
        a1, b1 = split_train_val(t, SplitSpec(0.8, seed=7))
        a2, b2 = split_train_val(t, SplitSpec(0.8, seed=7))
        assert np.array_equal(a1.columns[0], a2.columns[0])
        assert np.array_equal(b1.columns[0], b2.columns[0])

    def test_partition_is_disjoint_and_complete(self):
        t = self._table(23)
        tr, va = split_train_val(t, SplitSpec(0.9, seed=0))
        merged = np.sort(np.concatenate([tr.columns[0], va.columns[0]]))
        assert np.array_equal(merged, np.arange(23, dtype=float))

    def test_stratified_small(self):
        task = TaskKind.binary()
        schema = Schema(
            (("x", ColumnKind(None)), ("y", ColumnKind(("0", "1")))),
            TargetSpec(1, task),
        )
        t = Table(schema, [np.arange(4, dtype=float), np.array([0, 0, 1, 1])])
        tr, va = split_train_val(t, SplitSpec(0.5, seed=11))
        assert sorted(tr.target_values()) == [0, 1]
        assert sorted(va.target_values()) == [0, 1]

    def test_stratified_split_honors_train_size_with_many_small_classes(self):
        # five 2-row classes at fraction 0.9: train size must still be 9
        task = TaskKind.multiclass(5)
        schema = Schema(
            (("x", ColumnKind(None)), ("y", ColumnKind(tuple("abcde")))),
            TargetSpec(1, task),
        )
        t = Table(schema, [np.arange(10, dtype=float), np.repeat(np.arange(5), 2)])
        tr, va = split_train_val(t, SplitSpec(0.9, seed=0))
        assert tr.n_rows == 9 and va.n_rows == 1


class TestStandardize:
    def _numeric_table(self, values):
        schema = Schema((("x", ColumnKind(None)),), None)
        return Table(schema, [np.asarray(values, dtype=float)])

    def test_two_point_column(self):
        out, stats = standardize(self._numeric_table([0.0, 2.0]))
        assert stats.mean[0] == 1.0 and stats.std[0] == 1.0  # population std
        assert np.allclose(out.columns[0], [-1.0, 1.0])

    def test_constant_column_clamped(self):
        out, stats = standardize(self._numeric_table([5.0, 5.0, 5.0]))
        assert stats.std[0] == 1.0
        assert np.allclose(out.columns[0], [0.0, 0.0, 0.0])

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        t = self._numeric_table(rng.normal(3.0, 7.0, size=100))
        out, stats = standardize(t)
        back = destandardize(out, stats)
        assert np.allclose(back.columns[0], t.columns[0], rtol=1e-12, atol=1e-12)

    def test_standardized_column_has_zero_mean(self):
        rng = np.random.default_rng(1)
        out, _ = standardize(self._numeric_table(rng.normal(10.0, 2.0, size=57)))
        assert abs(out.columns[0].mean()) < 1e-10


class _FixedU:
    """Generator stand-in returning a fixed uniform draw."""

    def __init__(self, u):
        self.u = u

    def random(self, *args, **kwargs):
        return self.u


class TestQuantization:
    def test_dequantize_formula(self):
        assert dequantize(2, 4, _FixedU(0.5)) == 2.5

    def test_dequantize_range(self):
        rng = np.random.default_rng(0)
        draws = [dequantize(0, 3, rng) for _ in range(200)]
        assert all(0.0 <= v < 1.0 for v in draws)

    def test_dequantize_mean(self):
        rng = np.random.default_rng(1)
        draws = np.array([dequantize(3, 5, rng) for _ in range(100_000)])
        assert abs(draws.mean() - 3.5) < 0.01

    def test_out_of_range_code(self):
        with pytest.raises(TableError):
            dequantize(4, 4, _FixedU(0.1))

    def test_requantize_floor_and_clamp(self):
        assert requantize(2.5, 4) == 2
        assert requantize(-0.3, 4) == 0
        assert requantize(99.0, 4) == 3

    @given(st.integers(min_value=0, max_value=9), st.floats(min_value=0.0, max_value=0.999999))
    def test_round_trip_property(self, code, u):
        assert requantize(dequantize(code, 10, _FixedU(u)), 10) == code


class TestModelMatrix:
    def _mixed_table(self):
        schema = Schema(
            (("num", ColumnKind(None)), ("cat", ColumnKind(("a", "b", "c")))), None
        )
        return Table(schema, [np.array([1.0, 3.0, 5.0, 7.0]), np.array([0, 2, 1, 2])])

    def test_round_trip_through_model_space(self):
        t = self._mixed_table()
        stats = compute_stats(t)
        M = to_model_matrix(t, stats, rng=np.random.default_rng(0))
        back = from_model_matrix(M, t.schema, stats)
        assert np.allclose(back.columns[0], t.columns[0], atol=1e-10)
        assert np.array_equal(back.columns[1], t.columns[1])

    def test_codes_preserved_without_noise(self):
        t = self._mixed_table()
        stats = compute_stats(t)
        M = to_model_matrix(t, stats, rng=None)
        assert np.array_equal(M[:, 1], t.columns[1].astype(float))

    def test_json_round_trip(self):
        t = self._mixed_table()
        back = table_from_json(table_to_json(t))
        assert back.schema == t.schema
        for a, b in zip(back.columns, t.columns):
            assert np.array_equal(a, b)
