"""Command-line interface.

Every subcommand validates its inputs and exits 2 on bad input, 1 on a
runtime failure, and 0 on success. ``--json`` switches stdout to a single
machine-readable JSON document. Input files are never modified.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .dag import load_dag_file
from .errors import ColumnCollision, DagSynthError, EmptyTable, InputError, MissingColumn
from .harness import (
    ControlTotals,
    ExperimentConfig,
    aggregate_by_stratum,
    inject_bias,
    load_bias_rules,
    run_debias_experiment,
    run_population_experiment,
)
from .metrics import assess, ml_efficacy
from .sampler import DEFAULT_CHUNK_SIZE, sample
from .schema import DataTable, TableSchema, ingest_csv
from .seeding import derive_seed
from .trainer import TrainingConfig, load_checkpoint, save_checkpoint, train, write_trace_csv


def _emit(as_json: bool, payload: dict, human: str) -> None:
    if as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        click.echo(human)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InputError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except DagSynthError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Train graph-guided conditional generators for tabular data, sample
    and complete datasets with them, and run the evaluation protocols."""


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--dag", "dag_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@_handle_errors
def fit(data_path, schema_path, dag_path, config_path, out_dir, as_json):
    """Train a model and write its checkpoint directory."""
    schema = TableSchema.load(schema_path)
    table = ingest_csv(data_path, schema)
    dag, ci = load_dag_file(dag_path)
    config = TrainingConfig.load(config_path) if config_path else TrainingConfig()
    ckpt, trace = train(table, dag, ci, config)
    save_checkpoint(ckpt, out_dir)
    write_trace_csv(trace, Path(out_dir) / "trace.csv")
    final = trace[-1] if trace else None
    _emit(
        as_json,
        {
            "checkpoint": str(out_dir),
            "epochs": config.epochs,
            "generator_steps": len(trace),
            "final_loss_d": final.loss_d if final else None,
            "final_loss_g": final.loss_g if final else None,
        },
        f"trained {config.epochs} epochs ({len(trace)} generator steps); "
        f"checkpoint written to {out_dir}",
    )


@main.command("sample")
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--ci", "ci_path", type=click.Path(exists=True))
@click.option("--n-rows", type=int, help="Row count for models without conditional inputs.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--chunk-size", type=int, default=DEFAULT_CHUNK_SIZE, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@_handle_errors
def sample_cmd(model_dir, ci_path, n_rows, seed, chunk_size, out_path, as_json):
    """Generate synthetic rows; conditional-input values are copied verbatim."""
    ckpt = load_checkpoint(model_dir)
    ci_source = None
    if ckpt.ci_names:
        if ci_path is None:
            raise InputError("this model is conditional: pass --ci with a CSV of input values")
        ci_source = ingest_csv(ci_path, ckpt.schema.subset(ckpt.ci_names))
    table = sample(ckpt, ci_source=ci_source, n_rows=n_rows, seed=seed, chunk_size=chunk_size)
    table.to_csv(out_path)
    _emit(
        as_json,
        {"out": str(out_path), "rows": table.n_rows, "columns": list(table.schema.names)},
        f"wrote {table.n_rows} synthetic rows to {out_path}",
    )


@main.command("complete")
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--distributor", "distributor_path", required=True, type=click.Path(exists=True))
@click.option("--chunk-size", type=int, default=DEFAULT_CHUNK_SIZE, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@_handle_errors
def complete_cmd(model_dir, distributor_path, chunk_size, seed, out_path, as_json):
    """Stream a large low-detail CSV through the model, appending generated
    columns. Extra distributor columns pass through untouched."""
    ckpt = load_checkpoint(model_dir)
    ci_schema = ckpt.schema.subset(ckpt.ci_names)
    n_written = 0
    with open(distributor_path, "r", encoding="utf-8", newline="") as src, open(
        out_path, "w", encoding="utf-8", newline=""
    ) as dst:
        reader = csv.reader(src)
        writer = csv.writer(dst)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyTable(f"{distributor_path}: no header row")
        for name in ckpt.ci_names:
            if name not in header:
                raise MissingColumn(name)
        collisions = set(ckpt.generated_names) & set(header)
        if collisions:
            raise ColumnCollision(collisions)
        writer.writerow(header + list(ckpt.generated_names))

        def flush(rows: list[list[str]], chunk_no: int) -> int:
            if not rows:
                return 0
            columns = {}
            for name in ci_schema.names:
                idx = header.index(name)
                cells = [r[idx].strip() if idx < len(r) else "" for r in rows]
                if ci_schema[name].is_categorical:
                    columns[name] = np.array(cells, dtype=object)
                else:
                    try:
                        columns[name] = np.array([float(c) for c in cells])
                    except ValueError as exc:
                        raise InputError(
                            f"column {name!r}, chunk {chunk_no}: {exc}"
                        )
            chunk_table = DataTable(ci_schema, columns) if ci_schema.names else None
            generated = sample(
                ckpt,
                ci_source=chunk_table,
                n_rows=None if ci_schema.names else len(rows),
                seed=derive_seed(seed, f"cli-chunk-{chunk_no}"),
                chunk_size=chunk_size,
            )
            gen_cols = [generated.columns[n] for n in ckpt.generated_names]
            gen_kinds = [ckpt.schema[n].is_categorical for n in ckpt.generated_names]
            for i, row in enumerate(rows):
                extra = [
                    gen_cols[j][i] if gen_kinds[j] else repr(float(gen_cols[j][i]))
                    for j in range(len(gen_cols))
                ]
                writer.writerow(row + extra)
            return len(rows)

        pending: list[list[str]] = []
        chunk_no = 0
        for row in reader:
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue
            pending.append(row)
            if len(pending) >= chunk_size:
                n_written += flush(pending, chunk_no)
                pending = []
                chunk_no += 1
        n_written += flush(pending, chunk_no)
    _emit(
        as_json,
        {"out": str(out_path), "rows": n_written},
        f"completed {n_written} rows into {out_path}",
    )


@main.command()
@click.option("--original", "original_path", required=True, type=click.Path(exists=True))
@click.option("--synthetic", "synthetic_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--level", type=click.Choice(["1", "2"]), default="1", show_default=True)
@click.option("--exclude-ci", is_flag=True,
              help="Drop the conditional-input columns from the assessment.")
@click.option("--ci", "ci_list", help="Comma-separated conditional-input names.")
@click.option("--model", "model_dir", type=click.Path(exists=True),
              help="Checkpoint to read the conditional-input names from.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@_handle_errors
def evaluate(original_path, synthetic_path, schema_path, level, exclude_ci, ci_list, model_dir,
             out_path, as_json):
    """Standardized RMSE of the synthetic table against the original."""
    schema = TableSchema.load(schema_path)
    original = ingest_csv(original_path, schema)
    synthetic = ingest_csv(synthetic_path, schema)
    exclude: tuple[str, ...] = ()
    if exclude_ci:
        if ci_list:
            exclude = tuple(n.strip() for n in ci_list.split(",") if n.strip())
        elif model_dir:
            exclude = load_checkpoint(model_dir).ci_names
        else:
            raise InputError("--exclude-ci needs --ci names or --model to know what to drop")
    report = assess(original, synthetic, level=int(level), exclude=exclude)
    report.save(out_path)
    _emit(
        as_json,
        report.to_json(),
        f"level-{level} mean SRMSE {report.mean:.6f} over {len(report.entries)} "
        f"combinations; report written to {out_path}",
    )


@main.command("ml-efficacy")
@click.option("--original", "original_path", required=True, type=click.Path(exists=True))
@click.option("--synthetic", "synthetic_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--targets", help="Comma-separated target columns (default: every column).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@_handle_errors
def ml_efficacy_cmd(original_path, synthetic_path, schema_path, targets, seed, out_path, as_json):
    """Relative predictive loss of synthetic-trained surrogate models."""
    schema = TableSchema.load(schema_path)
    original = ingest_csv(original_path, schema)
    synthetic = ingest_csv(synthetic_path, schema)
    names = (
        [n.strip() for n in targets.split(",") if n.strip()] if targets else list(schema.names)
    )
    results = [ml_efficacy(original, synthetic, name, seed=seed) for name in names]
    by_kind = {
        kind: [r.relative for r in results if r.kind == kind]
        for kind in ("categorical", "continuous")
    }
    payload = {
        "targets": [r.to_json() for r in results],
        "mean_relative": {
            kind: (float(np.mean(vals)) if vals else None) for kind, vals in by_kind.items()
        },
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _emit(
        as_json,
        payload,
        f"ml efficacy over {len(results)} targets; report written to {out_path}",
    )


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--rules", "rules_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@_handle_errors
def bias(data_path, schema_path, rules_path, seed, out_path, as_json):
    """Remove a seeded random share of the rows matching each rule, in order."""
    schema = TableSchema.load(schema_path)
    table = ingest_csv(data_path, schema)
    rules = load_bias_rules(rules_path)
    biased = inject_bias(table, rules, seed=seed)
    biased.to_csv(out_path)
    _emit(
        as_json,
        {"out": str(out_path), "rows_before": table.n_rows, "rows_after": biased.n_rows},
        f"kept {biased.n_rows} of {table.n_rows} rows; wrote {out_path}",
    )


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@_handle_errors
def aggregate(data_path, schema_path, spec_path, out_path, as_json):
    """Per-stratum weighted aggregates; the output doubles as control totals."""
    schema = TableSchema.load(schema_path)
    table = ingest_csv(data_path, schema)
    with open(spec_path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    stratum_var = spec["stratum_var"]
    controls = []
    totals = {}
    for entry in spec["variables"]:
        agg = aggregate_by_stratum(
            table,
            entry["name"],
            stratum_var,
            size_var=entry.get("size_var") if entry.get("household_weighted") else None,
        )
        if agg.distributions:
            controls.append(
                {
                    "variable": entry["name"],
                    "strata": agg.distributions,
                    "household_weighted": bool(entry.get("household_weighted", False)),
                    **({"size_var": entry["size_var"]} if entry.get("size_var") else {}),
                }
            )
        if agg.totals:
            totals[entry["name"]] = agg.totals
    payload = {"stratum_var": stratum_var, "controls": controls, "totals": totals}
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _emit(as_json, payload, f"aggregated {len(spec['variables'])} variables into {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--plots", is_flag=True, help="Also write boxplot summaries as PNG files.")
@click.option("--json", "as_json", is_flag=True)
@_handle_errors
def experiment(config_path, out_dir, plots, as_json):
    """Run a config-driven experiment into a run directory."""
    cfg = ExperimentConfig.load(config_path)
    schema = TableSchema.load(cfg.schema_path)
    feeder = ingest_csv(cfg.feeder_path, schema)
    dag, ci = load_dag_file(cfg.dag_path)
    if cfg.conditional_inputs is not None:
        ci = cfg.conditional_inputs
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if cfg.distributor_path and cfg.control_totals_path:
        dist_schema = (
            TableSchema.load(cfg.distributor_schema_path)
            if cfg.distributor_schema_path
            else schema.subset(ci)
        )
        distributor = ingest_csv(cfg.distributor_path, dist_schema)
        controls = ControlTotals.load(cfg.control_totals_path)
        report = run_population_experiment(
            feeder, distributor, controls, dag, ci, cfg.training,
            bias_rules=cfg.bias_rules, out_dir=out,
        )
        payload = report.to_json()
        if plots:
            _plot_population(report, out / "js_boxplot.png")
        _emit(as_json, payload, f"population experiment written to {out}")
    else:
        bundle = run_debias_experiment(
            feeder, cfg.bias_rules, dag, ci, cfg.training,
            n_trainings=cfg.trainings, n_samples_per_training=cfg.samples_per_training,
            level=cfg.level, out_dir=out,
        )
        payload = bundle.to_json()
        if plots:
            _plot_bundle(bundle, out / "srmse_boxplot.png")
        _emit(
            as_json,
            payload,
            f"{cfg.trainings} trainings x {cfg.samples_per_training} samples; "
            f"bundle mean SRMSE {bundle.mean:.6f}; runs written to {out}",
        )


def _plot_bundle(bundle, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    means = [r.mean for _, _, r in bundle.reports]
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.boxplot([means], tick_labels=["synthetic"], showmeans=True)
    ax.axhline(bundle.reference.mean, linestyle="--", color="black", label="biased vs unbiased")
    ax.set_ylabel("SRMSE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_population(report, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    variables = sorted(report.completed)
    completed = [list(report.completed[v].values()) for v in variables]
    baseline = [list(report.baseline[v].values()) for v in variables]
    fig, axes = plt.subplots(1, max(len(variables), 1), figsize=(3 * max(len(variables), 1), 4))
    if len(variables) == 1:
        axes = [axes]
    for ax, var, comp, base in zip(axes, variables, completed, baseline):
        ax.boxplot([comp, base], tick_labels=["completed", "oversampled"], showmeans=True)
        ax.set_title(var, fontsize=9)
        ax.set_ylabel("JS distance")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


if __name__ == "__main__":
    main()
