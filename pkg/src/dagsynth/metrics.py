"""Assessment battery for synthetic tables.

Single- and two-variable frequency lists are compared with a standardized
RMSE (the RMSE between the two lists divided by the mean of the reference
list); distributions are compared with base-2 Kullback-Leibler divergence
and its bounded symmetric form, the Jensen-Shannon distance. Predictive
usefulness is scored by training a gradient-boosted tree model on the
synthetic table and measuring its loss on the original, relative to a
cross-validated baseline trained on the original itself.

All bin definitions come from the reference table only, so the synthetic
table is scored on the reference's own grid.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import (
    BinMismatch,
    SchemaMismatch,
    SingleClassTarget,
    SupportViolation,
    UnknownVariable,
)
from .schema import DataTable

N_QUANTILE_BINS = 10
PAIR_SEP = "||"


@dataclass(frozen=True)
class VariableBins:
    """Bin grid for one variable: category labels, or quantile intervals."""

    variable: str
    labels: tuple[str, ...]
    edges: tuple[float, ...] | None = None  # interior cut points, continuous only

    def assign(self, column: np.ndarray) -> np.ndarray:
        if self.edges is None:
            lookup = {c: i for i, c in enumerate(self.labels)}
            try:
                return np.array([lookup[v] for v in column], dtype=np.int64)
            except KeyError as exc:
                raise UnknownVariable(f"{self.variable}: unknown category {exc.args[0]!r}")
        return np.searchsorted(np.asarray(self.edges), column, side="right")


@dataclass(frozen=True)
class Binning:
    """Per-variable bin grids derived from one reference table."""

    bins: dict

    @classmethod
    def from_table(cls, table: DataTable, n_quantile_bins: int = N_QUANTILE_BINS) -> "Binning":
        out = {}
        for v in table.schema.variables:
            if v.is_categorical:
                out[v.name] = VariableBins(v.name, tuple(v.categories))
            else:
                col = table.columns[v.name]
                qs = np.linspace(0, 1, n_quantile_bins + 1)[1:-1]
                edges = tuple(float(e) for e in np.quantile(col, qs))
                labels = tuple(f"q{i}" for i in range(n_quantile_bins))
                out[v.name] = VariableBins(v.name, labels, edges)
        return cls(out)

    def __getitem__(self, name: str) -> VariableBins:
        if name not in self.bins:
            raise UnknownVariable(name)
        return self.bins[name]


@dataclass(frozen=True)
class FrequencyList:
    """Relative frequencies over the bin grid of one or two variables.

    Empty bins are retained with frequency zero; frequencies sum to one.
    """

    variables: tuple[str, ...]
    labels: tuple[str, ...]
    frequencies: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "frequencies", np.asarray(self.frequencies, dtype=np.float64)
        )
        if len(self.labels) != len(self.frequencies):
            raise BinMismatch("labels and frequencies disagree in length")


def frequency_list(table: DataTable, variables, binning: Binning) -> FrequencyList:
    """Relative frequency of each bin (or bin pair) in the table."""
    variables = tuple(variables)
    if not 1 <= len(variables) <= 2:
        raise UnknownVariable("frequency lists take one or two variables")
    for name in variables:
        if name not in table.schema:
            raise UnknownVariable(name)

    grids = [binning[name] for name in variables]
    codes = [g.assign(table.columns[g.variable]) for g in grids]
    sizes = [len(g.labels) for g in grids]
    if len(variables) == 1:
        flat = codes[0]
        labels = grids[0].labels
    else:
        flat = codes[0] * sizes[1] + codes[1]
        labels = tuple(
            f"{a}{PAIR_SEP}{b}" for a in grids[0].labels for b in grids[1].labels
        )
    counts = np.bincount(flat, minlength=int(np.prod(sizes))).astype(np.float64)
    return FrequencyList(variables, labels, counts / counts.sum())


def srmse(original: FrequencyList, synthetic: FrequencyList) -> float:
    """RMSE between the two lists, divided by the mean of the original list."""
    if original.variables != synthetic.variables or original.labels != synthetic.labels:
        raise BinMismatch(
            f"frequency lists are not on the same bins: "
            f"{original.variables} vs {synthetic.variables}"
        )
    diff = original.frequencies - synthetic.frequencies
    rmse = float(np.sqrt(np.mean(diff**2)))
    return rmse / float(np.mean(original.frequencies))


def kl(p, q) -> float:
    """Base-2 Kullback-Leibler divergence, with 0 * log(0/x) taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise SupportViolation("distributions are not on the same support")
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise SupportViolation("q assigns zero mass where p is positive")
    return float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))


def js_distance(p, q) -> float:
    """Square root of the Jensen-Shannon divergence (base-2 logs, in [0, 1])."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m = 0.5 * (p + q)
    divergence = 0.5 * (kl(p, m) + kl(q, m))
    return float(np.sqrt(min(max(divergence, 0.0), 1.0)))


# ---------------------------------------------------------------------------
# Predictive usefulness
# ---------------------------------------------------------------------------

GBT_PARAMS = {"max_iter": 500, "max_depth": 8, "learning_rate": 0.1, "early_stopping": False}


@dataclass(frozen=True)
class MLEfficacyResult:
    target: str
    kind: str  # "categorical" | "continuous"
    loss_synthetic: float
    loss_baseline: float
    relative: float

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "kind": self.kind,
            "loss_synthetic": self.loss_synthetic,
            "loss_baseline": self.loss_baseline,
            "relative": self.relative,
        }


def _design_matrix(table: DataTable, feature_names) -> tuple[np.ndarray, list[bool]]:
    cols = []
    is_cat = []
    for name in feature_names:
        spec = table.schema[name]
        if spec.is_categorical:
            lookup = {c: i for i, c in enumerate(spec.categories)}
            cols.append(np.array([lookup[v] for v in table.columns[name]], dtype=np.float64))
            is_cat.append(True)
        else:
            cols.append(table.columns[name])
            is_cat.append(False)
    return np.column_stack(cols), is_cat


def _full_proba(model, x: np.ndarray, n_classes: int) -> np.ndarray:
    raw = model.predict_proba(x)
    out = np.full((len(x), n_classes), 1e-12)
    for j, cls in enumerate(model.classes_):
        out[:, int(cls)] = raw[:, j]
    return out / out.sum(axis=1, keepdims=True)


def ml_efficacy(
    original: DataTable, synthetic: DataTable, target: str, seed: int = 0
) -> MLEfficacyResult:
    """Relative predictive loss of a synthetic-trained surrogate model.

    A gradient-boosted tree model is trained on the synthetic table (all
    columns but the target as features) and scored on the original table:
    log loss for categorical targets, squared error for continuous ones.
    The baseline is the same learner trained on the original under 5-fold
    cross-validation. Returns (loss_synth - loss_baseline) / loss_baseline,
    so 0 is parity and lower is better.
    """
    from sklearn.ensemble import HistGradientBoostingClassifier, HistGradientBoostingRegressor
    from sklearn.metrics import log_loss
    from sklearn.model_selection import KFold

    if original.schema != synthetic.schema:
        raise SchemaMismatch("original and synthetic tables must share a schema")
    spec = original.schema[target]
    features = [n for n in original.schema.names if n != target]
    x_orig, cat_mask = _design_matrix(original, features)
    x_synth, _ = _design_matrix(synthetic, features)

    if spec.is_categorical:
        lookup = {c: i for i, c in enumerate(spec.categories)}
        y_orig = np.array([lookup[v] for v in original.columns[target]], dtype=np.int64)
        y_synth = np.array([lookup[v] for v in synthetic.columns[target]], dtype=np.int64)
        if len(np.unique(y_synth)) < 2:
            raise SingleClassTarget(target)
        n_classes = len(spec.categories)

        def fit_score(x_tr, y_tr, x_te, y_te) -> float:
            model = HistGradientBoostingClassifier(
                random_state=seed, categorical_features=cat_mask, **GBT_PARAMS
            )
            model.fit(x_tr, y_tr)
            proba = _full_proba(model, x_te, n_classes)
            return float(log_loss(y_te, proba, labels=np.arange(n_classes)))

    else:
        y_orig = original.columns[target]
        y_synth = synthetic.columns[target]

        def fit_score(x_tr, y_tr, x_te, y_te) -> float:
            model = HistGradientBoostingRegressor(
                random_state=seed, categorical_features=cat_mask, **GBT_PARAMS
            )
            model.fit(x_tr, y_tr)
            return float(np.mean((model.predict(x_te) - y_te) ** 2))

    loss_synth = fit_score(x_synth, y_synth, x_orig, y_orig)

    folds = KFold(n_splits=5, shuffle=True, random_state=seed)
    fold_losses = []
    for train_idx, test_idx in folds.split(x_orig):
        if spec.is_categorical and len(np.unique(y_orig[train_idx])) < 2:
            raise SingleClassTarget(target)
        fold_losses.append(
            fit_score(x_orig[train_idx], y_orig[train_idx], x_orig[test_idx], y_orig[test_idx])
        )
    loss_baseline = float(np.mean(fold_losses))

    relative = (loss_synth - loss_baseline) / max(loss_baseline, 1e-12)
    return MLEfficacyResult(target, spec.kind, loss_synth, loss_baseline, relative)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    """Per-combination standardized RMSE values plus their mean."""

    level: int
    entries: tuple  # of (variables tuple, srmse)

    @property
    def mean(self) -> float:
        return float(np.mean([v for _, v in self.entries])) if self.entries else 0.0

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "srmse": [{"variables": list(vs), "value": val} for vs, val in self.entries],
            "mean_srmse": self.mean,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["variables", "srmse"])
            for vs, val in self.entries:
                writer.writerow(["+".join(vs), repr(val)])
            writer.writerow(["mean", repr(self.mean)])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def assess(
    original: DataTable, synthetic: DataTable, level: int = 1, exclude=()
) -> MetricsReport:
    """Standardized RMSE per variable (level 1) or per unordered pair of
    variables (level 2), with bins taken from the original table.

    ``exclude`` drops columns from the assessment (typically the
    conditional-input columns, which the synthetic table copies verbatim and
    would score an unearned zero on).
    """
    if original.schema != synthetic.schema:
        raise SchemaMismatch("original and synthetic tables must share a schema")
    if level not in (1, 2):
        raise SchemaMismatch("level must be 1 or 2")
    excluded = set(exclude)
    names = [n for n in original.schema.names if n not in excluded]
    binning = Binning.from_table(original.select(names))
    combos = [(n,) for n in names] if level == 1 else list(combinations(names, 2))
    entries = []
    for combo in combos:
        f_orig = frequency_list(original, combo, binning)
        f_synth = frequency_list(synthetic, combo, binning)
        entries.append((combo, srmse(f_orig, f_synth)))
    return MetricsReport(level, tuple(entries))
