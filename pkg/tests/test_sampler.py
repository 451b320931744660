"""Sampling, completion, and the stratified resampling baseline."""

import numpy as np
import pytest

from conftest import make_toy_table, toy_dag
from dagsynth.errors import ColumnCollision, EmptyStratum, SchemaMismatch, UnknownCategory
from dagsynth.sampler import ChunkInstrument, complete, oversample_baseline, sample
from dagsynth.schema import DataTable, TableSchema, VariableSpec
from dagsynth.trainer import TrainingConfig, train


@pytest.fixture(scope="module")
def toy_ckpt():
    table = make_toy_table(1000, seed=11)
    config = TrainingConfig(epochs=2, batch_size=500, d_z=8, d_h=12, d_f=8, n_modes=2, seed=5)
    ckpt, _ = train(table, toy_dag(), ("x",), config)
    return table, ckpt


class TestSample:
    def test_one_row_per_input_row(self, toy_ckpt):
        table, ckpt = toy_ckpt
        out = sample(ckpt, ci_source=table.take(np.arange(100)), seed=0)
        assert out.n_rows == 100
        assert out.schema.names == ("x", "y", "z")

    def test_ci_columns_copied_verbatim(self, toy_ckpt):
        table, ckpt = toy_ckpt
        src = table.take(np.arange(250))
        out = sample(ckpt, ci_source=src, seed=3)
        assert np.array_equal(out.columns["x"], src.columns["x"])

    def test_seeded_determinism(self, toy_ckpt):
        table, ckpt = toy_ckpt
        a = sample(ckpt, ci_source=table, seed=7)
        b = sample(ckpt, ci_source=table, seed=7)
        assert a.equal(b)
        c = sample(ckpt, ci_source=table, seed=8)
        assert not c.equal(a)

    def test_unknown_ci_category(self, toy_ckpt):
        _, ckpt = toy_ckpt
        wide = TableSchema((VariableSpec("x", "categorical", ("c0", "weird")),))
        src = DataTable(wide, {"x": np.array(["weird"], dtype=object)})
        with pytest.raises(UnknownCategory) as err:
            sample(ckpt, ci_source=src, seed=0)
        assert err.value.column == "x"

    def test_missing_ci_column(self, toy_ckpt):
        _, ckpt = toy_ckpt
        schema = TableSchema((VariableSpec("other", "categorical", ("a", "b")),))
        src = DataTable(schema, {"other": np.array(["a"], dtype=object)})
        with pytest.raises(SchemaMismatch):
            sample(ckpt, ci_source=src, seed=0)

    def test_extra_source_columns_ignored(self, toy_ckpt):
        table, ckpt = toy_ckpt
        out = sample(ckpt, ci_source=table, seed=1)  # y, z present in source
        assert out.n_rows == table.n_rows


class TestComplete:
    def test_extra_columns_untouched(self, toy_ckpt):
        table, ckpt = toy_ckpt
        dist_schema = TableSchema(
            (
                VariableSpec("id", "continuous"),
                VariableSpec("x", "categorical", ("c0", "c1", "c2", "c3", "c4")),
            )
        )
        distributor = DataTable(
            dist_schema,
            {"id": np.arange(80, dtype=float), "x": table.columns["x"][:80]},
        )
        out = complete(ckpt, distributor, seed=2)
        assert out.schema.names == ("id", "x", "y", "z")
        assert np.array_equal(out.columns["id"], distributor.columns["id"])
        assert np.array_equal(out.columns["x"], distributor.columns["x"])

    def test_row_count_matches_distributor(self, toy_ckpt):
        table, ckpt = toy_ckpt
        out = complete(ckpt, table.select(["x"]).take(np.arange(37)), seed=0)
        assert out.n_rows == 37

    def test_zero_row_distributor(self, toy_ckpt):
        table, ckpt = toy_ckpt
        empty = table.select(["x"]).take(np.zeros(0, dtype=int))
        out = complete(ckpt, empty, seed=0)
        assert out.n_rows == 0
        assert out.schema.names == ("x", "y", "z")

    def test_name_collision_is_an_error(self, toy_ckpt):
        table, ckpt = toy_ckpt
        with pytest.raises(ColumnCollision):
            complete(ckpt, table.select(["x", "y"]), seed=0)

    def test_chunked_memory_instrumentation(self, toy_ckpt):
        table, ckpt = toy_ckpt
        distributor = table.select(["x"])
        instrument = ChunkInstrument()
        out = complete(ckpt, distributor, seed=0, chunk_size=100, instrument=instrument)
        assert out.n_rows == distributor.n_rows
        assert instrument.peak_rows <= 2 * 100
        assert instrument.chunks == [100] * 10
        assert instrument.current_rows == 0

    def test_fixed_chunk_size_deterministic(self, toy_ckpt):
        # Noise streams derive from the chunk index, so determinism is
        # guaranteed per (seed, chunk_size) pair.
        table, ckpt = toy_ckpt
        a = complete(ckpt, table.select(["x"]), seed=4, chunk_size=100)
        b = complete(ckpt, table.select(["x"]), seed=4, chunk_size=100)
        assert a.equal(b)


class TestOversampleBaseline:
    def make_table(self):
        schema = TableSchema(
            (
                VariableSpec("borough", "categorical", ("A", "B")),
                VariableSpec("v", "continuous"),
            )
        )
        return DataTable(
            schema,
            {
                "borough": np.array(["A"] * 5 + ["B"] * 3, dtype=object),
                "v": np.arange(8, dtype=float),
            },
        )

    def test_counts_match_targets_exactly(self):
        out = oversample_baseline(self.make_table(), "borough", {"A": 12, "B": 4}, seed=0)
        assert int((out.columns["borough"] == "A").sum()) == 12
        assert int((out.columns["borough"] == "B").sum()) == 4

    def test_rows_come_from_their_stratum(self):
        out = oversample_baseline(self.make_table(), "borough", {"A": 12}, seed=0)
        assert set(out.columns["v"].tolist()) <= {0.0, 1.0, 2.0, 3.0, 4.0}

    def test_zero_target_absent(self):
        out = oversample_baseline(self.make_table(), "borough", {"A": 0, "B": 2}, seed=0)
        assert not (out.columns["borough"] == "A").any()

    def test_empty_stratum(self):
        with pytest.raises(EmptyStratum):
            oversample_baseline(self.make_table(), "borough", {"C": 3}, seed=0)

    def test_seeded_determinism(self):
        a = oversample_baseline(self.make_table(), "borough", {"A": 7, "B": 7}, seed=5)
        b = oversample_baseline(self.make_table(), "borough", {"A": 7, "B": 7}, seed=5)
        assert a.equal(b)
