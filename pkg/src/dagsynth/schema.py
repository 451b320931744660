"""Typed tabular data: schemas, CSV ingestion, and the model-space encoding.

A table is a set of named columns, each either continuous (float64) or
categorical (string labels from a fixed list). The model never sees raw
values: continuous columns are normalized against a per-column Gaussian
mixture (one scalar position within the best-matching mode, plus a one-hot
mode indicator) and categorical columns become smoothed one-hot probability
vectors. Both encodings decode back exactly (categorical) or to within
1e-6 (continuous values within 4 sigma of their mode).
"""

from __future__ import annotations

import csv
import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateColumnWarning,
    EmptyTable,
    InputError,
    MissingColumn,
    SchemaMismatch,
    TypeMismatch,
    UnknownCategory,
    UnknownVariable,
)

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

# Continuous scalars are normalized by 4 sigma of the assigned mode and
# clamped to [-1, 1]; values within 4 sigma therefore round-trip exactly.
CLAMP_SIGMAS = 4.0


@dataclass(frozen=True)
class VariableSpec:
    """One column: a name, a kind, and kind-specific detail."""

    name: str
    kind: str  # "continuous" | "categorical"
    categories: tuple[str, ...] | None = None
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise InputError(f"variable name {self.name!r} is not an identifier")
        if self.kind not in ("continuous", "categorical"):
            raise InputError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.categories or len(self.categories) < 2:
                raise InputError(f"categorical variable {self.name!r} needs at least 2 categories")
            if len(set(self.categories)) != len(self.categories):
                raise InputError(f"variable {self.name!r} has duplicate categories")
            if self.bounds is not None:
                raise InputError(f"categorical variable {self.name!r} cannot declare bounds")
        else:
            if self.categories is not None:
                raise InputError(f"continuous variable {self.name!r} cannot declare categories")
            if self.bounds is not None and not self.bounds[0] < self.bounds[1]:
                raise InputError(f"variable {self.name!r}: bounds min must be < max")

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"


@dataclass(frozen=True)
class TableSchema:
    """Ordered list of variables; the order is the canonical column order."""

    variables: tuple[VariableSpec, ...]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise InputError("schema has duplicate variable names")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def __getitem__(self, name: str) -> VariableSpec:
        for v in self.variables:
            if v.name == name:
                return v
        raise UnknownVariable(name)

    def __contains__(self, name: str) -> bool:
        return any(v.name == name for v in self.variables)

    def index(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise UnknownVariable(name)

    def subset(self, names) -> "TableSchema":
        """Sub-schema with the given variables, in this schema's order."""
        wanted = set(names)
        missing = wanted - set(self.names)
        if missing:
            raise UnknownVariable(sorted(missing)[0])
        return TableSchema(tuple(v for v in self.variables if v.name in wanted))

    def to_json(self) -> dict:
        out = []
        for v in self.variables:
            entry: dict = {"name": v.name, "kind": v.kind}
            if v.categories is not None:
                entry["categories"] = list(v.categories)
            if v.bounds is not None:
                entry["bounds"] = list(v.bounds)
            out.append(entry)
        return {"variables": out}

    @classmethod
    def from_json(cls, data: dict) -> "TableSchema":
        try:
            raw = data["variables"]
        except (KeyError, TypeError):
            raise InputError('schema file must be an object with a "variables" list')
        specs = []
        for entry in raw:
            specs.append(
                VariableSpec(
                    name=entry["name"],
                    kind=entry["kind"],
                    categories=tuple(str(c) for c in entry["categories"])
                    if "categories" in entry
                    else None,
                    bounds=tuple(float(b) for b in entry["bounds"]) if "bounds" in entry else None,
                )
            )
        return cls(tuple(specs))

    @classmethod
    def load(cls, path) -> "TableSchema":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class DataTable:
    """Schema plus equal-length columns; categorical cells must be known labels."""

    schema: TableSchema
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        if set(self.columns) != set(self.schema.names):
            raise SchemaMismatch("column set does not match schema")
        lengths = {len(col) for col in self.columns.values()}
        if len(lengths) > 1:
            raise SchemaMismatch(f"columns have unequal lengths: {sorted(lengths)}")
        for v in self.schema.variables:
            col = self.columns[v.name]
            if v.is_categorical:
                col = np.asarray(col, dtype=object)
                bad = ~np.isin(col, np.array(v.categories, dtype=object))
                if bad.any():
                    row = int(np.argmax(bad))
                    raise UnknownCategory(str(col[row]), v.name, row)
                self.columns[v.name] = col
            else:
                self.columns[v.name] = np.asarray(col, dtype=np.float64)

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise UnknownVariable(name)
        return self.columns[name]

    def select(self, names) -> "DataTable":
        sub = self.schema.subset(names)
        return DataTable(sub, {n: self.columns[n] for n in sub.names})

    def take(self, indices) -> "DataTable":
        idx = np.asarray(indices)
        return DataTable(self.schema, {n: self.columns[n][idx] for n in self.schema.names})

    def equal(self, other: "DataTable") -> bool:
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        for v in self.schema.variables:
            a, b = self.columns[v.name], other.columns[v.name]
            same = np.array_equal(a, b)
            if not same:
                return False
        return True

    def to_csv(self, path) -> None:
        names = self.schema.names
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            cols = [self.columns[n] for n in names]
            kinds = [self.schema[n].is_categorical for n in names]
            for i in range(self.n_rows):
                writer.writerow(
                    [cols[j][i] if kinds[j] else repr(float(cols[j][i])) for j in range(len(names))]
                )


def ingest_csv(path, schema: TableSchema) -> DataTable:
    """Read a headered CSV into a typed table.

    Columns are matched by name (extra CSV columns are ignored), reordered to
    the schema order. Any unparseable, missing, or out-of-category cell stops
    ingestion with a diagnostic naming the offending row and column; up to ten
    offenders are listed.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTable(f"{path}: no header row")
        header = [h.strip() for h in header]
        col_idx = {}
        for v in schema.variables:
            if v.name not in header:
                raise MissingColumn(v.name)
            col_idx[v.name] = header.index(v.name)

        raw: dict[str, list] = {v.name: [] for v in schema.variables}
        problems: list[tuple[int, str, str]] = []
        for row_no, row in enumerate(reader):
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue  # blank line
            for v in schema.variables:
                idx = col_idx[v.name]
                cell = row[idx].strip() if idx < len(row) else ""
                if cell == "":
                    problems.append((row_no, v.name, "missing cell"))
                    continue
                if v.is_categorical:
                    if cell not in v.categories:
                        problems.append((row_no, v.name, f"unknown category {cell!r}"))
                        continue
                    raw[v.name].append(cell)
                else:
                    try:
                        raw[v.name].append(float(cell))
                    except ValueError:
                        problems.append((row_no, v.name, f"cannot parse {cell!r} as a number"))

        if problems:
            first = problems[0]
            extra = [f"row {r}, column {c!r}: {d}" for r, c, d in problems[1:10]]
            if len(problems) > 10:
                extra.append(f"... {len(problems) - 10} more")
            raise TypeMismatch(first[0], first[1], first[2], extra)

    n = len(raw[schema.names[0]]) if schema.names else 0
    if n == 0:
        raise EmptyTable(f"{path}: no data rows")
    columns = {
        v.name: np.array(raw[v.name], dtype=object if v.is_categorical else np.float64)
        for v in schema.variables
    }
    return DataTable(schema, columns)


# ---------------------------------------------------------------------------
# Encoders
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContinuousEncoder:
    """Gaussian-mixture normalization for one continuous column.

    A value v is assigned to the mode k with the highest posterior and
    represented as (u, one-hot(k)) with u = clamp((v - mu_k) / (4 sigma_k),
    -1, 1). Decoding inverts the affine map for the argmax mode.
    """

    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=np.float64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if self.n_modes < 1:
            raise InputError("continuous encoder needs at least one mode")
        if not (self.stds > 0).all():
            raise InputError("mode standard deviations must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise InputError("mode weights must sum to 1")

    @property
    def n_modes(self) -> int:
        return len(self.means)

    @property
    def width(self) -> int:
        return 1 + self.n_modes

    def assign_modes(self, values: np.ndarray) -> np.ndarray:
        """Posterior-argmax mode index for each value (deterministic)."""
        v = np.asarray(values, dtype=np.float64)[:, None]
        log_post = (
            np.log(self.weights)[None, :]
            - np.log(self.stds)[None, :]
            - 0.5 * ((v - self.means[None, :]) / self.stds[None, :]) ** 2
        )
        return np.argmax(log_post, axis=1)

    def encode_values(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=np.float64)
        k = self.assign_modes(v)
        u = (v - self.means[k]) / (CLAMP_SIGMAS * self.stds[k])
        u = np.clip(u, -1.0, 1.0)
        out = np.zeros((len(v), self.width))
        out[:, 0] = u
        out[np.arange(len(v)), 1 + k] = 1.0
        return out

    def decode_values(self, block: np.ndarray) -> np.ndarray:
        block = np.asarray(block, dtype=np.float64)
        if block.shape[1] != self.width:
            raise SchemaMismatch(f"expected width {self.width}, got {block.shape[1]}")
        u = block[:, 0]
        k = np.argmax(block[:, 1:], axis=1)
        return u * CLAMP_SIGMAS * self.stds[k] + self.means[k]


@dataclass(frozen=True)
class CategoricalEncoder:
    """Smoothed one-hot encoding for one categorical column.

    Encoding adds uniform noise in [0, smoothing) to the one-hot vector and
    renormalizes; with smoothing < 0.5 the argmax never moves, so decoding by
    argmax is exact.
    """

    categories: tuple[str, ...]
    smoothing: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.smoothing < 0.5:
            raise InputError("smoothing must lie in [0, 0.5)")

    @property
    def width(self) -> int:
        return len(self.categories)

    def codes(self, values: np.ndarray) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.categories)}
        out = np.empty(len(values), dtype=np.int64)
        for i, val in enumerate(values):
            try:
                out[i] = lookup[val]
            except KeyError:
                raise UnknownCategory(str(val), "<categorical>", i)
        return out

    def encode_values(self, values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        k = self.codes(values)
        out = np.zeros((len(values), self.width))
        out[np.arange(len(values)), k] = 1.0
        if self.smoothing > 0:
            out += rng.uniform(0.0, self.smoothing, size=out.shape)
            out /= out.sum(axis=1, keepdims=True)
        return out

    def decode_values(self, block: np.ndarray) -> np.ndarray:
        block = np.asarray(block, dtype=np.float64)
        if block.shape[1] != self.width:
            raise SchemaMismatch(f"expected width {self.width}, got {block.shape[1]}")
        k = np.argmax(block, axis=1)
        cats = np.array(self.categories, dtype=object)
        return cats[k]


@dataclass(frozen=True)
class EncoderSet:
    """Per-variable encoders covering exactly one schema."""

    schema: TableSchema
    encoders: dict = field(default_factory=dict)

    def __post_init__(self):
        if set(self.encoders) != set(self.schema.names):
            raise SchemaMismatch("encoder set does not cover the schema exactly")

    def __getitem__(self, name: str):
        if name not in self.encoders:
            raise UnknownVariable(name)
        return self.encoders[name]

    def width(self, name: str) -> int:
        return self[name].width

    def total_width(self, names=None) -> int:
        names = self.schema.names if names is None else names
        return sum(self.width(n) for n in names)

    def subset(self, names) -> "EncoderSet":
        sub = self.schema.subset(names)
        return EncoderSet(sub, {n: self.encoders[n] for n in sub.names})

    def to_json(self) -> dict:
        out = {}
        for name in self.schema.names:
            enc = self.encoders[name]
            if isinstance(enc, CategoricalEncoder):
                out[name] = {
                    "kind": "categorical",
                    "categories": list(enc.categories),
                    "smoothing": enc.smoothing,
                }
            else:
                out[name] = {
                    "kind": "continuous",
                    "means": enc.means.tolist(),
                    "stds": enc.stds.tolist(),
                    "weights": enc.weights.tolist(),
                }
        return out

    @classmethod
    def from_json(cls, schema: TableSchema, data: dict) -> "EncoderSet":
        encoders: dict = {}
        for name, entry in data.items():
            if entry["kind"] == "categorical":
                encoders[name] = CategoricalEncoder(
                    tuple(entry["categories"]), float(entry["smoothing"])
                )
            else:
                encoders[name] = ContinuousEncoder(
                    np.array(entry["means"]), np.array(entry["stds"]), np.array(entry["weights"])
                )
        return cls(schema, encoders)


def _fit_mixture(values: np.ndarray, n_modes: int, seed: int, bounds) -> ContinuousEncoder:
    spread = float(np.ptp(values))
    if spread < 1e-12:
        # Constant column: single fallback mode centered on the value.
        scale = (bounds[1] - bounds[0]) / CLAMP_SIGMAS if bounds else 0.0
        sigma = max(1e-6, scale)
        warnings.warn(
            DegenerateColumnWarning(f"constant continuous column; using one mode, sigma={sigma}")
        )
        return ContinuousEncoder(np.array([values[0]]), np.array([sigma]), np.array([1.0]))

    from sklearn.mixture import GaussianMixture

    k = int(min(n_modes, len(np.unique(values))))
    gm = GaussianMixture(n_components=k, covariance_type="full", random_state=seed, n_init=1)
    gm.fit(values[:, None])
    means = gm.means_[:, 0]
    stds = np.sqrt(gm.covariances_[:, 0, 0])
    weights = gm.weights_
    order = np.argsort(means)
    means, stds, weights = means[order], stds[order], weights[order]
    stds = np.maximum(stds, 1e-6)
    weights = weights / weights.sum()
    return ContinuousEncoder(means, stds, weights)


def fit_encoders(
    table: DataTable, n_modes: int = 5, smoothing: float = 0.2, seed: int = 0
) -> EncoderSet:
    """Fit per-variable encoders on a table.

    Continuous columns get an expectation-maximization mixture fit with up to
    ``n_modes`` modes (fewer when the column has fewer distinct values);
    categorical columns take their label list from the schema.
    Deterministic given (table, seed).
    """
    if table.n_rows == 0:
        raise EmptyTable("cannot fit encoders on an empty table")
    encoders: dict = {}
    for v in table.schema.variables:
        if v.is_categorical:
            encoders[v.name] = CategoricalEncoder(v.categories, smoothing)
        else:
            encoders[v.name] = _fit_mixture(table.columns[v.name], n_modes, seed, v.bounds)
    return EncoderSet(table.schema, encoders)


def encode(table: DataTable, encoders: EncoderSet, seed: int = 0) -> np.ndarray:
    """Encode a table into one float64 matrix, blocks in schema order.

    The seed drives the categorical smoothing noise only; everything else is
    deterministic.
    """
    if tuple(table.schema.names) != tuple(encoders.schema.names):
        raise SchemaMismatch("table schema does not match encoder set")
    rng = np.random.default_rng(seed)
    blocks = []
    for v in table.schema.variables:
        enc = encoders[v.name]
        col = table.columns[v.name]
        if v.is_categorical:
            try:
                blocks.append(enc.encode_values(col, rng))
            except UnknownCategory as exc:
                raise UnknownCategory(exc.value, v.name, exc.row)
        else:
            blocks.append(enc.encode_values(col))
    return np.concatenate(blocks, axis=1)


def encode_blocks(
    table: DataTable, encoders: EncoderSet, names=None, seed: int = 0
) -> dict[str, np.ndarray]:
    """Encode selected columns into per-variable blocks (callers decide the
    concatenation order, e.g. graph order rather than schema order)."""
    names = table.schema.names if names is None else tuple(names)
    rng = np.random.default_rng(seed)
    out = {}
    for name in names:
        spec = table.schema[name]
        enc = encoders[name]
        col = table.columns[name]
        if spec.is_categorical:
            try:
                out[name] = enc.encode_values(col, rng)
            except UnknownCategory as exc:
                raise UnknownCategory(exc.value, name, exc.row)
        else:
            out[name] = enc.encode_values(col)
    return out


def decode(matrix: np.ndarray, encoders: EncoderSet) -> DataTable:
    """Decode a matrix back into a typed table (total on well-shaped input)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != encoders.total_width():
        raise SchemaMismatch(
            f"matrix width {matrix.shape[1] if matrix.ndim == 2 else '?'} does not match "
            f"encoder total width {encoders.total_width()}"
        )
    columns = {}
    offset = 0
    for v in encoders.schema.variables:
        enc = encoders[v.name]
        block = matrix[:, offset : offset + enc.width]
        columns[v.name] = enc.decode_values(block)
        offset += enc.width
    return DataTable(encoders.schema, columns)
