"""Experiment drivers: bias injection, aggregation, and evaluation bundles.

Two reproducible experiment shapes are provided. The debias experiment
trains several models on a deliberately biased table, samples each of them
several times using the *unbiased* conditional-input values, and scores
every synthetic dataset against the unbiased table (alongside the
biased-vs-unbiased reference distance). The population experiment trains on
a small detailed table, completes a large low-detail table, aggregates the
result per stratum (optionally household-weighted), and scores each
aggregate against control totals with the Jensen-Shannon distance, next to
a stratified resampling baseline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dag import Dag
from .errors import InputError, UnknownVariable, ZeroHouseholdSize
from .metrics import MetricsReport, assess, js_distance
from .sampler import complete, oversample_baseline, sample
from .schema import DataTable
from .seeding import derive_seed
from .trainer import TrainingConfig, save_checkpoint, train, write_trace_csv

_COMPARATORS = {
    "eq": lambda col, v: col == v,
    "ne": lambda col, v: col != v,
    "lt": lambda col, v: col < v,
    "le": lambda col, v: col <= v,
    "gt": lambda col, v: col > v,
    "ge": lambda col, v: col >= v,
    "in": lambda col, v: np.isin(col, list(v)),
}


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Predicate:
    """Single-variable row test: <variable> <op> <value>."""

    variable: str
    op: str
    value: object

    def __post_init__(self):
        if self.op not in _COMPARATORS:
            raise InputError(f"unknown comparator {self.op!r}; use one of {sorted(_COMPARATORS)}")

    def matches(self, table: DataTable) -> np.ndarray:
        if self.variable not in table.schema:
            raise UnknownVariable(self.variable)
        col = table.columns[self.variable]
        value = self.value
        if not table.schema[self.variable].is_categorical and self.op != "in":
            value = float(value)  # numeric comparison on continuous columns
        return np.asarray(_COMPARATORS[self.op](col, value), dtype=bool)

    def to_json(self) -> dict:
        return {"variable": self.variable, "op": self.op, "value": self.value}


@dataclass(frozen=True)
class BiasRule:
    """Remove a fraction of the rows matching a predicate.

    ``where`` holds extra conditions that are ANDed with the main predicate,
    for stratified removals such as "within borough B, drop 95% of one age
    band".
    """

    variable: str
    op: str
    value: object
    rate: float
    where: tuple = ()

    def __post_init__(self):
        Predicate(self.variable, self.op, self.value)  # comparator check
        if not 0.0 <= self.rate <= 1.0:
            raise InputError(f"removal rate must lie in [0, 1], got {self.rate}")

    def matches(self, table: DataTable) -> np.ndarray:
        mask = Predicate(self.variable, self.op, self.value).matches(table)
        for condition in self.where:
            mask &= condition.matches(table)
        return mask

    def to_json(self) -> dict:
        out = {"variable": self.variable, "op": self.op, "value": self.value, "rate": self.rate}
        if self.where:
            out["where"] = [c.to_json() for c in self.where]
        return out

    @classmethod
    def from_json(cls, data: dict) -> "BiasRule":
        where = tuple(
            Predicate(c["variable"], c.get("op", "eq"), c["value"])
            for c in data.get("where", [])
        )
        return cls(
            variable=data["variable"],
            op=data.get("op", "eq"),
            value=data["value"],
            rate=float(data["rate"]),
            where=where,
        )


def load_bias_rules(path) -> list[BiasRule]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return [BiasRule.from_json(entry) for entry in data]


def inject_bias(table: DataTable, rules, seed: int = 0) -> DataTable:
    """Apply removal rules one after another.

    Each rule enumerates the rows matching its predicate among the survivors
    of the previous rules and removes round(m * rate) of them, chosen
    uniformly without replacement. Rounding is half away from zero.
    """
    rng = np.random.default_rng(seed)
    current = table
    for rule in rules:
        mask = rule.matches(current)
        matching = np.flatnonzero(mask)
        n_remove = _round_half_away(len(matching) * rule.rate)
        if n_remove == 0:
            continue
        removed = rng.choice(matching, size=n_remove, replace=False)
        keep = np.setdiff1d(np.arange(current.n_rows), removed)
        current = current.take(keep)
    return current


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StratumAggregate:
    """Per-stratum weighted aggregation of one variable.

    ``totals`` sums value/size per stratum (for numeric values);
    ``distributions`` holds the per-category weighted relative frequencies
    (for categorical values, each row contributing its weight).
    """

    variable: str
    stratum_var: str
    totals: dict
    distributions: dict

    def to_json(self) -> dict:
        return {
            "variable": self.variable,
            "stratum_var": self.stratum_var,
            "totals": self.totals,
            "distributions": self.distributions,
        }


def _row_weights(table: DataTable, size_var: str | None) -> np.ndarray:
    if size_var is None:
        return np.ones(table.n_rows)
    spec = table.schema[size_var]
    raw = table.columns[size_var]
    if spec.is_categorical:
        try:
            sizes = np.array([float(v) for v in raw])
        except ValueError:
            raise InputError(f"size variable {size_var!r} has non-numeric categories")
    else:
        sizes = raw.astype(np.float64)
    bad = np.flatnonzero(sizes <= 0)
    if len(bad):
        raise ZeroHouseholdSize(int(bad[0]))
    return 1.0 / sizes


def household_aggregate(
    table: DataTable, value_var: str, size_var: str, stratum_var: str
) -> StratumAggregate:
    """Aggregate a household-level variable from individual rows.

    Every individual contributes its household value divided by the household
    size, so a household is counted once no matter how many of its members
    appear. For categorical values the contribution is a weight of 1/size on
    the household's category.
    """
    return aggregate_by_stratum(table, value_var, stratum_var, size_var=size_var)


def aggregate_by_stratum(
    table: DataTable, value_var: str, stratum_var: str, size_var: str | None = None
) -> StratumAggregate:
    """Weighted per-stratum totals and category distributions.

    With ``size_var`` given, rows are weighted by 1/size (household
    de-duplication); without it every row has weight one.
    """
    spec = table.schema[value_var]
    strata = table.columns[stratum_var]
    weights = _row_weights(table, size_var)

    totals: dict = {}
    distributions: dict = {}
    if spec.is_categorical:
        values = table.columns[value_var]
        try:
            numeric = np.array([float(v) for v in spec.categories])
            value_of = {c: x for c, x in zip(spec.categories, numeric)}
        except ValueError:
            value_of = None
        for stratum in dict.fromkeys(strata):
            mask = strata == stratum
            w = weights[mask]
            v = values[mask]
            counts = {c: float(w[v == c].sum()) for c in spec.categories}
            total_w = sum(counts.values())
            distributions[str(stratum)] = {
                c: (counts[c] / total_w if total_w > 0 else 0.0) for c in spec.categories
            }
            if value_of is not None:
                totals[str(stratum)] = float(
                    sum(counts[c] * value_of[c] for c in spec.categories)
                )
    else:
        values = table.columns[value_var]
        for stratum in dict.fromkeys(strata):
            mask = strata == stratum
            totals[str(stratum)] = float((values[mask] * weights[mask]).sum())
    return StratumAggregate(value_var, stratum_var, totals, distributions)


@dataclass(frozen=True)
class ControlVariable:
    """One control: a categorical variable with per-stratum target shares."""

    variable: str
    strata: dict  # stratum -> {category: share}
    household_weighted: bool = False
    size_var: str | None = None

    def __post_init__(self):
        for stratum, dist in self.strata.items():
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-9:
                raise InputError(
                    f"control shares for stratum {stratum!r} sum to {total}, expected 1"
                )
        if self.household_weighted and not self.size_var:
            raise InputError(f"control {self.variable!r}: household weighting needs size_var")


@dataclass(frozen=True)
class ControlTotals:
    """Census-style targets: per-stratum category shares for some variables."""

    stratum_var: str
    controls: tuple[ControlVariable, ...]

    @classmethod
    def from_json(cls, data: dict) -> "ControlTotals":
        controls = tuple(
            ControlVariable(
                variable=c["variable"],
                strata={str(s): {str(k): float(p) for k, p in d.items()}
                        for s, d in c["strata"].items()},
                household_weighted=bool(c.get("household_weighted", False)),
                size_var=c.get("size_var"),
            )
            for c in data["controls"]
        )
        return cls(str(data["stratum_var"]), controls)

    @classmethod
    def load(cls, path) -> "ControlTotals":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        return {
            "stratum_var": self.stratum_var,
            "controls": [
                {
                    "variable": c.variable,
                    "strata": c.strata,
                    "household_weighted": c.household_weighted,
                    **({"size_var": c.size_var} if c.size_var else {}),
                }
                for c in self.controls
            ],
        }


def score_against_controls(table: DataTable, controls: ControlTotals) -> dict:
    """Jensen-Shannon distance per (variable, stratum) between the table's
    weighted aggregates and the control shares."""
    out: dict = {}
    for control in controls.controls:
        agg = aggregate_by_stratum(
            table,
            control.variable,
            controls.stratum_var,
            size_var=control.size_var if control.household_weighted else None,
        )
        per_stratum = {}
        categories = tuple(table.schema[control.variable].categories)
        for stratum, target in control.strata.items():
            if stratum not in agg.distributions:
                continue  # stratum absent from the table
            p = np.array([agg.distributions[stratum].get(c, 0.0) for c in categories])
            q = np.array([target.get(c, 0.0) for c in categories])
            per_stratum[stratum] = js_distance(p, q)
        out[control.variable] = per_stratum
    return out


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DebiasBundle:
    """All reports from one debias experiment."""

    reports: tuple  # of (training index, sample index, MetricsReport)
    reference: MetricsReport  # biased table scored against the unbiased table

    @property
    def mean(self) -> float:
        return float(np.mean([r.mean for _, _, r in self.reports]))

    def to_json(self) -> dict:
        return {
            "runs": [
                {"training": t, "sample": s, **r.to_json()} for t, s, r in self.reports
            ],
            "bundle_mean_srmse": self.mean,
            "reference_biased_vs_unbiased": self.reference.to_json(),
        }


def run_debias_experiment(
    feeder: DataTable,
    bias_rules,
    dag: Dag,
    conditional_inputs,
    config: TrainingConfig,
    n_trainings: int,
    n_samples_per_training: int,
    level: int = 1,
    out_dir=None,
) -> DebiasBundle:
    """Bias the feeder, train repeatedly on the biased table, sample with the
    unbiased conditional inputs, and score everything against the unbiased
    feeder."""
    ci = tuple(conditional_inputs)
    biased = inject_bias(feeder, bias_rules, seed=derive_seed(config.seed, "bias"))
    reference = assess(feeder, biased, level=level, exclude=ci)

    reports = []
    for t in range(n_trainings):
        run_config = replace(config, seed=derive_seed(config.seed, f"training-{t}"))
        ckpt, trace = train(biased, dag, ci, run_config)
        run_dir = None
        if out_dir is not None:
            run_dir = Path(out_dir) / f"run-{t:02d}"
            (run_dir / "samples").mkdir(parents=True, exist_ok=True)
            save_checkpoint(ckpt, run_dir / "checkpoint")
            write_trace_csv(trace, run_dir / "trace.csv")
        run_reports = []
        for s in range(n_samples_per_training):
            synthetic = sample(
                ckpt,
                ci_source=feeder if ci else None,
                n_rows=None if ci else feeder.n_rows,
                seed=derive_seed(config.seed, f"sample-{t}-{s}"),
            )
            synthetic = synthetic.select(feeder.schema.names)
            report = assess(feeder, synthetic, level=level, exclude=ci)
            reports.append((t, s, report))
            run_reports.append((s, report))
            if run_dir is not None:
                synthetic.to_csv(run_dir / "samples" / f"sample-{s:02d}.csv")
        if run_dir is not None:
            with open(run_dir / "metrics.json", "w", encoding="utf-8") as fh:
                json.dump(
                    [{"sample": s, **r.to_json()} for s, r in run_reports],
                    fh, indent=2, sort_keys=True,
                )
                fh.write("\n")

    bundle = DebiasBundle(tuple(reports), reference)
    if out_dir is not None:
        with open(Path(out_dir) / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(bundle.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return bundle


@dataclass(frozen=True)
class PopulationReport:
    """Jensen-Shannon distances per (variable, stratum) for the completed
    population and for the resampling baseline."""

    completed: dict
    baseline: dict

    def to_json(self) -> dict:
        return {"completed": self.completed, "oversampled_baseline": self.baseline}


def run_population_experiment(
    feeder: DataTable,
    distributor: DataTable,
    controls: ControlTotals,
    dag: Dag,
    conditional_inputs,
    config: TrainingConfig,
    bias_rules=(),
    out_dir=None,
) -> PopulationReport:
    """Train on the (optionally biased) feeder, complete the distributor, and
    score aggregates against control totals alongside the resampling
    baseline."""
    ci = tuple(conditional_inputs)
    training_table = (
        inject_bias(feeder, bias_rules, seed=derive_seed(config.seed, "bias"))
        if bias_rules
        else feeder
    )
    ckpt, trace = train(training_table, dag, ci, config)
    completed = complete(ckpt, distributor, seed=derive_seed(config.seed, "complete"))

    strata_col = distributor.columns[controls.stratum_var]
    strata, counts = np.unique(strata_col, return_counts=True)
    targets = {str(s): int(c) for s, c in zip(strata, counts)}
    baseline = oversample_baseline(
        feeder, controls.stratum_var, targets, seed=derive_seed(config.seed, "oversample")
    )

    report = PopulationReport(
        completed=score_against_controls(completed, controls),
        baseline=score_against_controls(baseline, controls),
    )
    if out_dir is not None:
        out = Path(out_dir)
        (out / "samples").mkdir(parents=True, exist_ok=True)
        save_checkpoint(ckpt, out / "checkpoint")
        write_trace_csv(trace, out / "trace.csv")
        completed.to_csv(out / "samples" / "completed.csv")
        with open(out / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report


# ---------------------------------------------------------------------------
# Config-driven entry point
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """File-driven experiment description (paths are resolved relative to the
    config file's directory)."""

    schema_path: Path
    feeder_path: Path
    dag_path: Path
    training: TrainingConfig
    bias_rules: tuple = ()
    distributor_path: Path | None = None
    distributor_schema_path: Path | None = None
    control_totals_path: Path | None = None
    trainings: int = 1
    samples_per_training: int = 1
    level: int = 1
    conditional_inputs: tuple | None = None  # None: take them from the graph file

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        base = path.parent
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)

        def resolve(key):
            return (base / data[key]).resolve() if key in data and data[key] else None

        training = TrainingConfig.from_json(data.get("training", {}))
        if "seed" in data:
            training = replace(training, seed=int(data["seed"]))
        rules = tuple(BiasRule.from_json(r) for r in data.get("bias_rules", []))
        required = [k for k in ("schema", "feeder", "dag") if not data.get(k)]
        if required:
            raise InputError(f"experiment config must name: {', '.join(required)}")
        return cls(
            schema_path=resolve("schema"),
            feeder_path=resolve("feeder"),
            dag_path=resolve("dag"),
            training=training,
            bias_rules=rules,
            distributor_path=resolve("distributor"),
            distributor_schema_path=resolve("distributor_schema"),
            control_totals_path=resolve("control_totals"),
            trainings=int(data.get("trainings", 1)),
            samples_per_training=int(data.get("samples_per_training", 1)),
            level=int(data.get("level", 1)),
            conditional_inputs=tuple(data["ci"]) if "ci" in data else None,
        )
