"""Ingestion and encoding contracts."""

import numpy as np
import pytest

from conftest import make_mixed_table, mixed_schema
from dagsynth.errors import (
    DegenerateColumnWarning,
    EmptyTable,
    InputError,
    MissingColumn,
    TypeMismatch,
    UnknownCategory,
)
from dagsynth.schema import (
    ContinuousEncoder,
    DataTable,
    TableSchema,
    VariableSpec,
    decode,
    encode,
    fit_encoders,
    ingest_csv,
)


def small_schema():
    return TableSchema(
        (
            VariableSpec("age", "continuous"),
            VariableSpec("gender", "categorical", ("M", "F")),
        )
    )


def write(tmp_path, text):
    path = tmp_path / "data.csv"
    path.write_text(text, encoding="utf-8")
    return path


class TestIngest:
    def test_three_row_csv(self, tmp_path):
        path = write(tmp_path, "age,gender\n31,M\n45.5,F\n22,M\n")
        table = ingest_csv(path, small_schema())
        assert table.n_rows == 3
        assert table.schema.names == ("age", "gender")
        assert table.columns["age"].tolist() == [31.0, 45.5, 22.0]

    def test_column_order_follows_schema(self, tmp_path):
        path = write(tmp_path, "gender,age\nM,31\n")
        table = ingest_csv(path, small_schema())
        assert table.schema.names == ("age", "gender")

    def test_missing_column(self, tmp_path):
        path = write(tmp_path, "gender\nM\n")
        with pytest.raises(MissingColumn) as err:
            ingest_csv(path, small_schema())
        assert err.value.name == "age"

    def test_type_mismatch_names_row_and_column(self, tmp_path):
        path = write(tmp_path, "age,gender\n31,M\nabc,F\n")
        with pytest.raises(TypeMismatch) as err:
            ingest_csv(path, small_schema())
        assert err.value.row == 1
        assert err.value.column == "age"

    def test_missing_cell_rejected(self, tmp_path):
        path = write(tmp_path, "age,gender\n31,M\n,F\n")
        with pytest.raises(TypeMismatch):
            ingest_csv(path, small_schema())

    def test_unknown_category_rejected(self, tmp_path):
        path = write(tmp_path, "age,gender\n31,X\n")
        with pytest.raises(TypeMismatch):
            ingest_csv(path, small_schema())

    def test_empty_table(self, tmp_path):
        path = write(tmp_path, "age,gender\n")
        with pytest.raises(EmptyTable):
            ingest_csv(path, small_schema())

    def test_extra_csv_columns_ignored(self, tmp_path):
        path = write(tmp_path, "id,age,gender\n7,31,M\n")
        table = ingest_csv(path, small_schema())
        assert table.n_rows == 1

    def test_csv_round_trip(self, tmp_path):
        table = make_mixed_table(50, seed=3)
        out = tmp_path / "out.csv"
        table.to_csv(out)
        back = ingest_csv(out, mixed_schema())
        assert back.equal(table)


class TestSchemaTypes:
    def test_categorical_needs_two_categories(self):
        with pytest.raises(InputError):
            VariableSpec("g", "categorical", ("only",))

    def test_bounds_must_be_ordered(self):
        with pytest.raises(InputError):
            VariableSpec("a", "continuous", bounds=(5.0, 5.0))

    def test_duplicate_names_rejected(self):
        v = VariableSpec("a", "continuous")
        with pytest.raises(InputError):
            TableSchema((v, v))

    def test_table_rejects_unknown_category(self):
        schema = small_schema()
        with pytest.raises(UnknownCategory):
            DataTable(schema, {"age": np.array([1.0]), "gender": np.array(["X"], dtype=object)})


class TestFitEncoders:
    def test_constant_column_single_mode(self):
        schema = TableSchema((VariableSpec("v", "continuous"),))
        table = DataTable(schema, {"v": np.full(20, 5.0)})
        with pytest.warns(DegenerateColumnWarning):
            encs = fit_encoders(table, n_modes=5)
        enc = encs["v"]
        assert enc.n_modes == 1
        assert enc.means[0] == 5.0
        assert enc.stds[0] >= 1e-6

    def test_categorical_width(self):
        schema = TableSchema((VariableSpec("g", "categorical", ("M", "F")),))
        table = DataTable(schema, {"g": np.array(["M", "F"], dtype=object)})
        encs = fit_encoders(table)
        assert encs.width("g") == 2

    def test_em_recovers_separated_modes(self):
        # Oracle: the generating means are known; 10k draws from
        # N(0,1) + N(100,1) must put the fitted means within 0.5 of {0, 100}.
        rng = np.random.default_rng(42)
        vals = np.concatenate([rng.normal(0, 1, 5000), rng.normal(100, 1, 5000)])
        schema = TableSchema((VariableSpec("v", "continuous"),))
        table = DataTable(schema, {"v": vals})
        enc = fit_encoders(table, n_modes=2)["v"]
        assert abs(enc.means[0] - 0.0) < 0.5
        assert abs(enc.means[1] - 100.0) < 0.5

    def test_deterministic_given_seed(self, mixed_table):
        a = fit_encoders(mixed_table, n_modes=3, seed=9)
        b = fit_encoders(mixed_table, n_modes=3, seed=9)
        assert np.array_equal(a["age"].means, b["age"].means)
        assert np.array_equal(a["income"].stds, b["income"].stds)

    def test_empty_table_rejected(self):
        schema = TableSchema((VariableSpec("v", "continuous"),))
        table = DataTable(schema, {"v": np.zeros(0)})
        with pytest.raises(EmptyTable):
            fit_encoders(table)


class TestEncodeDecode:
    def test_onehot_without_smoothing(self):
        schema = TableSchema((VariableSpec("g", "categorical", ("M", "F")),))
        table = DataTable(schema, {"g": np.array(["M"], dtype=object)})
        encs = fit_encoders(table, smoothing=0.0)
        assert encode(table, encs).tolist() == [[1.0, 0.0]]

    def test_centered_value_gives_zero_u(self):
        enc = ContinuousEncoder(np.array([10.0]), np.array([2.0]), np.array([1.0]))
        block = enc.encode_values(np.array([10.0]))
        assert block[0, 0] == 0.0
        assert block[0, 1] == 1.0

    def test_eight_sigma_clamps_to_one(self):
        # (8 sigma) / (4 sigma) = 2, clamped to 1.
        enc = ContinuousEncoder(np.array([10.0]), np.array([2.0]), np.array([1.0]))
        assert enc.encode_values(np.array([10.0 + 16.0]))[0, 0] == 1.0

    def test_decode_inverse_formula(self):
        # u = 0.25 at mu=10, sigma=2: 10 + 0.25 * 8 = 12.
        enc = ContinuousEncoder(np.array([10.0]), np.array([2.0]), np.array([1.0]))
        assert enc.decode_values(np.array([[0.25, 1.0]]))[0] == pytest.approx(12.0)

    def test_argmax_decode(self):
        schema = TableSchema((VariableSpec("g", "categorical", ("M", "F")),))
        table = DataTable(schema, {"g": np.array(["M", "F"], dtype=object)})
        encs = fit_encoders(table)
        out = decode(np.array([[0.9, 0.1], [0.2, 0.8]]), encs)
        assert out.columns["g"].tolist() == ["M", "F"]

    def test_round_trip_100_rows(self):
        table = make_mixed_table(100, seed=21)
        encs = fit_encoders(table, n_modes=3, seed=2)
        back = decode(encode(table, encs, seed=4), encs)
        assert np.array_equal(back.columns["gender"], table.columns["gender"])
        assert np.abs(back.columns["age"] - table.columns["age"]).max() <= 1e-6
        assert np.abs(back.columns["income"] - table.columns["income"]).max() <= 1e-6

    def test_encoded_categorical_blocks_are_distributions(self, mixed_table):
        encs = fit_encoders(mixed_table, n_modes=3, seed=2)
        mat = encode(mixed_table, encs, seed=9)
        start = encs.width("age")
        block = mat[:, start : start + encs.width("gender")]
        assert (block >= 0).all()
        assert np.abs(block.sum(axis=1) - 1.0).max() <= 1e-6

    def test_continuous_scalar_in_range(self, mixed_table):
        encs = fit_encoders(mixed_table, n_modes=3, seed=2)
        mat = encode(mixed_table, encs, seed=9)
        assert np.abs(mat[:, 0]).max() <= 1.0

    def test_unknown_category_on_encode(self):
        # Encoders trained on a narrower label set than the incoming table.
        wide = TableSchema((VariableSpec("g", "categorical", ("M", "F", "X")),))
        table = DataTable(wide, {"g": np.array(["X"], dtype=object)})
        narrow = TableSchema((VariableSpec("g", "categorical", ("M", "F")),))
        fitted_on = DataTable(narrow, {"g": np.array(["M", "F"], dtype=object)})
        encs = fit_encoders(fitted_on)
        with pytest.raises(UnknownCategory) as err:
            encode(table, encs)
        assert err.value.column == "g"
