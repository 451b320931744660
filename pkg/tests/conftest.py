"""Shared fixtures: toy schemas, tables, and graphs used across the suite."""

from __future__ import annotations

import numpy as np
import pytest

from dagsynth.dag import Dag
from dagsynth.schema import DataTable, TableSchema, VariableSpec

# One line per acceptance criterion, printed after the run (the test module
# appends to this; pytest's capture would otherwise swallow mid-test prints).
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

X_CATEGORIES = ("c0", "c1", "c2", "c3", "c4")


def toy_schema() -> TableSchema:
    """Three categorical columns: x (fed as conditional input), y (tracks x
    with 10% label noise), z (a deterministic binary function of y)."""
    return TableSchema(
        (
            VariableSpec("x", "categorical", X_CATEGORIES),
            VariableSpec("y", "categorical", X_CATEGORIES),
            VariableSpec("z", "categorical", ("b0", "b1")),
        )
    )


def make_toy_table(n: int, seed: int, noise: float = 0.1) -> DataTable:
    """x uniform over five labels; y = x except with probability ``noise`` it
    flips to a uniformly random other label; z = b1 iff y is one of the first
    three labels."""
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 5, size=n)
    y = x.copy()
    flip = rng.random(n) < noise
    offsets = rng.integers(1, 5, size=n)
    y[flip] = (y[flip] + offsets[flip]) % 5
    z = (y < 3).astype(int)
    cats = np.array(X_CATEGORIES, dtype=object)
    return DataTable(
        toy_schema(),
        {
            "x": cats[x],
            "y": cats[y],
            "z": np.array(["b1" if v else "b0" for v in z], dtype=object),
        },
    )


def toy_dag() -> Dag:
    return Dag.from_edges([("x", "y"), ("y", "z")])


def mixed_schema() -> TableSchema:
    return TableSchema(
        (
            VariableSpec("age", "continuous", bounds=(0.0, 120.0)),
            VariableSpec("gender", "categorical", ("M", "F")),
            VariableSpec("income", "continuous"),
        )
    )


def make_mixed_table(n: int, seed: int) -> DataTable:
    rng = np.random.default_rng(seed)
    return DataTable(
        mixed_schema(),
        {
            "age": rng.uniform(18, 90, n),
            "gender": np.array(rng.choice(["M", "F"], n), dtype=object),
            "income": np.exp(rng.normal(10, 0.5, n)),
        },
    )


def random_dag(rng: np.random.Generator, n_nodes: int, edge_prob: float = 0.35) -> Dag:
    """Random DAG on nodes v0..v{n-1}: edges only from lower to higher index
    of a shuffled ranking, so the result is acyclic by construction."""
    names = [f"v{i}" for i in range(n_nodes)]
    rank = rng.permutation(n_nodes)
    edges = []
    for i in range(n_nodes):
        for j in range(n_nodes):
            if rank[i] < rank[j] and rng.random() < edge_prob:
                edges.append((names[i], names[j]))
    return Dag.from_edges(edges, nodes=names)


def schema_for_nodes(names) -> TableSchema:
    return TableSchema(
        tuple(VariableSpec(n, "categorical", ("a", "b")) for n in names)
    )


@pytest.fixture
def toy_table() -> DataTable:
    return make_toy_table(2000, seed=11)


@pytest.fixture
def mixed_table() -> DataTable:
    return make_mixed_table(400, seed=5)
